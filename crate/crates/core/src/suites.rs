//! The verification suites behind the command-line driver.
//!
//! Each suite returns its checks, a JSON payload and any CSV tables; writing
//! them out is left to the caller. Tolerances are the module defaults times
//! `tol_scale`, which may only tighten them.

use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::arith::{gcd, num_divisors};
use crate::charsums::{
    characters_mod, conductor, gauss_sum, gauss_sum_via_primitive, kloosterman_sum, phi, ramanujan_sum,
    ramanujan_sum_bruteforce,
};
use crate::deltasym::{BumpFunction, DeltaExpansion};
use crate::exponents::{self, balance_l, final_delta, fmt_q, proposition_ledger, ExponentError, Q};
use crate::kfrac::{self, cancellation_experiment, CoefficientModel, ExperimentConfig};
use crate::modforms::{self, amplifier_eval, coeffs_delta_form, coeffs_divisor, coeffs_synthetic, hecke_check};
use crate::oscint::{self, dual_length, voronoi_check, SmoothTestFunction};
use crate::pipeline::{self, run_pipeline, shipped_configs, shipped_poisson_instances, v_poisson_check};
use crate::sheval::{self, eta_separation_check, run_alpha_grid, run_shat_grid, AlphaGrid, ShatGrid};

pub const SCHEMA_VERSION: &str = "1";
pub const DEFAULT_SEED: u64 = 524;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{suite}: {message}")]
    Failed { suite: &'static str, message: String },
}

trait OrFail<T> {
    fn or_fail(self, suite: &'static str) -> Result<T, SuiteError>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, suite: &'static str) -> Result<T, SuiteError> {
        self.map_err(|e| SuiteError::Failed {
            suite,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplier on every default tolerance, in `(0, 1]`.
    pub tol_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: DEFAULT_SEED,
            tol_scale: 1.0,
        }
    }
}

impl SuiteOptions {
    pub fn validate(&self) -> Result<(), SuiteError> {
        if !(self.tol_scale > 0.0 && self.tol_scale <= 1.0) {
            return Err(SuiteError::Config(format!(
                "tolerance scale {} must lie in (0, 1]; overrides may only tighten",
                self.tol_scale
            )));
        }
        Ok(())
    }

    fn tol(&self, default: f64) -> f64 {
        default * self.tol_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// A CSV file produced by a suite, named `<suite>_<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub schema_version: &'static str,
    pub suite: &'static str,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub data: Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl SuiteReport {
    fn new(suite: &'static str, opts: &SuiteOptions) -> Self {
        SuiteReport {
            schema_version: SCHEMA_VERSION,
            suite,
            seed: opts.seed,
            pass: true,
            checks: Vec::new(),
            data: Value::Null,
            tables: Vec::new(),
        }
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn table(&mut self, name: &str, bytes: Vec<u8>) {
        self.tables.push(Table {
            name: name.into(),
            csv: String::from_utf8(bytes).expect("csv output is utf-8"),
        });
    }

    /// The checks as CSV.
    pub fn checks_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for c in &self.checks {
            wtr.serialize(c).expect("in-memory csv");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub const SUITES: [&str; 9] = [
    "charsums-verify",
    "delta-verify",
    "voronoi-verify",
    "hecke-verify",
    "amplifier-verify",
    "sheval-verify",
    "kfrac-experiment",
    "pipeline-run",
    "exponents-solve",
];

/// Runs the suite with the given command name.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    opts.validate()?;
    match name {
        "charsums-verify" => charsums_suite(opts),
        "delta-verify" => delta_suite(opts),
        "voronoi-verify" => voronoi_suite(opts),
        "hecke-verify" => hecke_suite(opts),
        "amplifier-verify" => amplifier_suite(opts),
        "sheval-verify" => sheval_suite(opts),
        "kfrac-experiment" => kfrac_suite(opts, &KfracPlan::default()),
        "pipeline-run" => pipeline_suite(opts),
        "exponents-solve" => exponents_suite(opts, 2, Ratio::new(1, 20)),
        other => Err(SuiteError::Config(format!("unknown suite {other:?}"))),
    }
}

/// Every suite; the order of the result follows [`SUITES`].
pub fn run_all(opts: &SuiteOptions) -> Result<Vec<SuiteReport>, SuiteError> {
    SUITES.par_iter().map(|s| run_suite(s, opts)).collect()
}

// ---------------------------------------------------------------- charsums

pub fn charsums_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "charsums-verify";
    let mut r = SuiteReport::new("charsums-verify", opts);

    let mut mismatches = 0u64;
    let mut bound = 0u64;
    for c in 1..=200u64 {
        for n in -200i64..=200 {
            let s = ramanujan_sum(n, c);
            if s != ramanujan_sum_bruteforce(n, c).or_fail(S)? {
                mismatches += 1;
            }
            if s.unsigned_abs() > crate::arith::gcd_i(n, c) {
                bound += 1;
            }
        }
    }
    r.check(
        "ramanujan_closed_vs_bruteforce",
        mismatches == 0,
        format!("{mismatches} mismatches on |n| ≤ 200, c ≤ 200"),
    );
    r.check("ramanujan_gcd_bound", bound == 0, format!("{bound} values exceed (n, c)"));

    let mut mult = 0u64;
    for c1 in 1..=30u64 {
        for c2 in 1..=30u64 {
            if gcd(c1, c2) != 1 {
                continue;
            }
            for n in -50i64..=50 {
                if ramanujan_sum(n, c1 * c2) != ramanujan_sum(n, c1) * ramanujan_sum(n, c2) {
                    mult += 1;
                }
            }
        }
    }
    r.check("ramanujan_multiplicative_in_c", mult == 0, format!("{mult} failures"));

    let mut worst_growth: f64 = 0.0;
    for n in 1..=100i64 {
        let mut acc = 0u64;
        for x in 1..=500u64 {
            acc += ramanujan_sum(n, x).unsigned_abs();
            let b = 3.0 * x as f64 * ((n as u64 * x) as f64).powf(0.1);
            worst_growth = worst_growth.max(acc as f64 / b);
        }
    }
    r.check(
        "ramanujan_average_growth",
        worst_growth <= 1.0,
        format!("max Σ|S(0,n;c)| / (3X(nX)^0.1) = {worst_growth:.4}"),
    );

    let (mut imag, mut weil) = (0.0f64, 0.0f64);
    for c in 1..=60u64 {
        for a in -8i64..=8 {
            for b in -8i64..=8 {
                let k = kloosterman_sum(a, b, c);
                imag = imag.max(k.im.abs());
                let g = crate::arith::gcd_i(b, gcd(a.unsigned_abs(), c));
                let bound = num_divisors(c) as f64 * (g as f64).sqrt() * (c as f64).sqrt() * (1.0 + 1e-6);
                weil = weil.max(k.norm() / bound);
            }
        }
    }
    r.check("kloosterman_real", imag <= opts.tol(1e-9), format!("max |Im| = {imag:.2e}"));
    r.check("kloosterman_weil_bound", weil <= 1.0, format!("max |S|/bound = {weil:.4}"));
    let k5 = kloosterman_sum(1, 1, 5).re;
    r.check(
        "kloosterman_example",
        (k5 - 0.381966011250105).abs() <= 1e-12,
        format!("S(1,1;5) = {k5:.12}"),
    );

    let (mut count, mut orth) = (0u64, 0.0f64);
    for q in 1..=60u64 {
        let chars = characters_mod(q);
        if chars.len() as u64 != phi(q) {
            count += 1;
        }
        for (i, x) in chars.iter().enumerate() {
            for (j, y) in chars.iter().enumerate() {
                let s: Complex64 = (0..q as i64).map(|a| x.eval(a) * y.eval(a).conj()).sum();
                let want = if i == j { phi(q) as f64 } else { 0.0 };
                orth = orth.max((s - want).norm() / phi(q) as f64);
            }
        }
    }
    r.check("character_count", count == 0, format!("{count} moduli with the wrong count"));
    r.check("character_orthogonality", orth <= opts.tol(1e-9), format!("max scaled deviation {orth:.2e}"));

    let (mut prim, mut induced) = (0.0f64, 0.0f64);
    for q in 1..=100u64 {
        for chi in characters_mod(q) {
            let g = gauss_sum(&chi);
            if chi.is_primitive() {
                prim = prim.max((g.norm() - (q as f64).sqrt()).abs());
            }
            induced = induced.max((g - gauss_sum_via_primitive(&chi)).norm());
        }
    }
    r.check("gauss_sum_primitive_modulus", prim <= opts.tol(1e-9), format!("max ||τ| − √q| = {prim:.2e}"));
    r.check("gauss_sum_imprimitive_factorization", induced <= opts.tol(1e-9), format!("max deviation {induced:.2e}"));

    let order6 = characters_mod(9).into_iter().find(|c| c.order() == 6).map(|c| conductor(&c));
    let mod4 = characters_mod(4).into_iter().find(|c| !c.is_principal()).map(|c| conductor(&c));
    r.check(
        "conductor_examples",
        order6 == Some(9) && mod4 == Some(4),
        format!("order-6 mod 9 → {order6:?}, non-principal mod 4 → {mod4:?}"),
    );
    r.data = json!({ "ramanujan_grid": [200, 200], "kloosterman_c_max": 60, "character_q_max": 60, "gauss_q_max": 100 });
    Ok(r)
}

// ---------------------------------------------------------------- delta

pub const DELTA_SCALES: [f64; 4] = [10.0, 20.0, 40.0, 80.0];
pub const DELTA_N_MAX: i64 = 200;
pub const DELTA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
struct DeltaRow {
    c: f64,
    max_error: f64,
    worst_n: i64,
    bump_disagreement: f64,
}

pub fn delta_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "delta-verify";
    let mut r = SuiteReport::new("delta-verify", opts);
    let mut rows = Vec::new();
    for c in DELTA_SCALES {
        let e = DeltaExpansion::new(c).or_fail(S)?;
        let alt = DeltaExpansion::with_bumps(
            c,
            BumpFunction::w_type_on(1.1, 1.9).or_fail(S)?,
            BumpFunction::u_type(3.0).or_fail(S)?,
        )
        .or_fail(S)?;
        let vals: Vec<(i64, f64, f64)> = (-DELTA_N_MAX..=DELTA_N_MAX)
            .into_par_iter()
            .map(|n| Ok((n, e.delta_eval(n)?, alt.delta_eval(n)?)))
            .collect::<Result<_, crate::deltasym::DeltaError>>()
            .or_fail(S)?;
        let mut row = DeltaRow {
            c,
            max_error: 0.0,
            worst_n: 0,
            bump_disagreement: 0.0,
        };
        for (n, v, w) in vals {
            let err = (v - if n == 0 { 1.0 } else { 0.0 }).abs();
            if err > row.max_error {
                row.max_error = err;
                row.worst_n = n;
            }
            row.bump_disagreement = row.bump_disagreement.max((v - w).abs());
        }
        r.check(
            format!("delta_identity_C{c}"),
            row.max_error <= opts.tol(DELTA_TOLERANCE),
            format!("max |δ(n) − [n=0]| = {:.2e} at n = {}", row.max_error, row.worst_n),
        );
        r.check(
            format!("bump_independence_C{c}"),
            row.bump_disagreement <= opts.tol(2e-6),
            format!("max difference between bump pairs {:.2e}", row.bump_disagreement),
        );
        rows.push(row);
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        wtr.serialize(row).or_fail(S)?;
    }
    r.table("scales", wtr.into_inner().or_fail(S)?);
    r.data = json!({ "rows": rows });
    Ok(r)
}

// ---------------------------------------------------------------- Voronoi

/// Twelve `(a, c, center, width)` combinations with `c ≤ 10`.
pub const VORONOI_GRID: [(i64, u64, f64, f64); 12] = [
    (1, 1, 100.0, 5.0),
    (1, 2, 100.0, 5.0),
    (1, 3, 150.0, 7.5),
    (2, 3, 150.0, 12.0),
    (1, 4, 200.0, 10.0),
    (3, 4, 200.0, 16.0),
    (2, 5, 200.0, 10.0),
    (1, 6, 300.0, 15.0),
    (3, 7, 300.0, 20.0),
    (3, 8, 400.0, 20.0),
    (2, 9, 400.0, 25.0),
    (3, 10, 500.0, 25.0),
];

pub fn voronoi_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "voronoi-verify";
    let mut r = SuiteReport::new("voronoi-verify", opts);
    let seq = coeffs_delta_form(20_000).or_fail(S)?;
    let reports = VORONOI_GRID
        .par_iter()
        .map(|&(a, c, x, w)| {
            let h = SmoothTestFunction::new(x, w)?;
            voronoi_check(&seq, a, c, &h, dual_length(c, &h))
        })
        .collect::<Result<Vec<_>, oscint::OscError>>()
        .or_fail(S)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["a", "c", "lhs", "rhs", "rel_error"]).or_fail(S)?;
    for v in &reports {
        r.check(
            format!("voronoi_a{}_c{}_h{}", v.a, v.c, v.center),
            v.rel_error <= opts.tol(oscint::VORONOI_TOLERANCE),
            format!("rel_error {:.2e} with {} dual terms", v.rel_error, v.dual_terms),
        );
        wtr.write_record([
            v.a.to_string(),
            v.c.to_string(),
            format!("{:e}{:+e}i", v.lhs.re, v.lhs.im),
            format!("{:e}{:+e}i", v.rhs.re, v.rhs.im),
            format!("{:e}", v.rel_error),
        ])
        .or_fail(S)?;
    }
    r.table("rows", wtr.into_inner().or_fail(S)?);
    r.data = json!({ "form": "delta", "rows": reports });
    Ok(r)
}

// ---------------------------------------------------------------- Hecke and amplifier

pub const SYNTHETIC_PRIME: u64 = 101;
pub const SYNTHETIC_SEEDS: usize = 5;

/// The `i`-th synthetic sequence of level 101 for the run seed.
pub fn synthetic_sequence(seed: u64, i: usize, n_max: usize) -> Result<modforms::CoefficientSequence, modforms::ModformError> {
    let chars = characters_mod(SYNTHETIC_PRIME);
    let s = seed.wrapping_add(i as u64);
    let chi = &chars[1 + (s % (chars.len() as u64 - 1)) as usize];
    let angle = (s % 360) as f64 * std::f64::consts::PI / 180.0;
    coeffs_synthetic(n_max, chi, Complex64::from_polar(0.8, angle), s)
}

pub fn hecke_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "hecke-verify";
    let mut r = SuiteReport::new("hecke-verify", opts);
    let mut rows = Vec::new();
    let mut run = |name: String, seq: modforms::CoefficientSequence, m: u64| -> Result<(), SuiteError> {
        let h = hecke_check(&seq, m).or_fail(S)?;
        r.check(
            format!("hecke_{name}"),
            h.pass,
            format!("M = {m}, max deviation {:.2e}", h.max_deviation()),
        );
        rows.push(json!({ "sequence": name, "report": h }));
        Ok(())
    };
    run("divisor".into(), coeffs_divisor(2500).or_fail(S)?, 50)?;
    run("delta".into(), coeffs_delta_form(900).or_fail(S)?, 30)?;
    for i in 0..SYNTHETIC_SEEDS {
        run(format!("synthetic{i}"), synthetic_sequence(opts.seed, i, 10_000).or_fail(S)?, 100)?;
    }
    r.data = json!({ "rows": rows });
    Ok(r)
}

pub const AMPLIFIER_LENGTHS: [u64; 4] = [10, 20, 50, 100];

pub fn amplifier_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "amplifier-verify";
    let mut r = SuiteReport::new("amplifier-verify", opts);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["sequence", "L", "re", "im", "prime_count", "deviation"]).or_fail(S)?;
    let mut worst: f64 = 0.0;
    for i in 0..SYNTHETIC_SEEDS {
        let seq = synthetic_sequence(opts.seed, i, 10_000).or_fail(S)?;
        for l in AMPLIFIER_LENGTHS {
            let a = amplifier_eval(&seq, l).or_fail(S)?;
            worst = worst.max(a.deviation());
            r.check(
                format!("amplifier_synthetic{i}_L{l}"),
                a.deviation() <= opts.tol(modforms::AMPLIFIER_TOLERANCE),
                format!("A = {:.12}, π(L) − π(L/2) = {}", a.a.re, a.prime_count),
            );
            wtr.write_record([
                format!("synthetic{i}"),
                l.to_string(),
                format!("{:e}", a.a.re),
                format!("{:e}", a.a.im),
                a.prime_count.to_string(),
                format!("{:e}", a.deviation()),
            ])
            .or_fail(S)?;
        }
    }
    r.table("rows", wtr.into_inner().or_fail(S)?);
    r.data = json!({ "max_deviation": worst, "lengths": AMPLIFIER_LENGTHS, "sequences": SYNTHETIC_SEEDS });
    Ok(r)
}

// ---------------------------------------------------------------- sheval

pub fn sheval_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "sheval-verify";
    let mut r = SuiteReport::new("sheval-verify", opts);
    let shat = run_shat_grid(&ShatGrid::default()).or_fail(S)?;
    r.check(
        "shat_closed_form_grid",
        shat.pass() && shat.max_scaled_error <= opts.tol(sheval::SHAT_TOLERANCE),
        format!(
            "{} instances ({} skipped), {} evaluations, max |diff|/(c₁c₂) = {:.2e}",
            shat.instances, shat.skipped_instances, shat.evaluations, shat.max_scaled_error
        ),
    );
    r.check(
        "shat_vanishing_and_zero_formula",
        shat.pass(),
        format!(
            "{} forced zeros, {} Ŝ(0) formula checks",
            shat.forced_zero_checks, shat.zero_formula_checks
        ),
    );
    let mut buf = Vec::new();
    shat.write_failures_csv(&mut buf).or_fail(S)?;
    r.table("failures", buf);

    let alpha = run_alpha_grid(&AlphaGrid::default()).or_fail(S)?;
    r.check(
        "alphahat_identities",
        alpha.identity_failures == 0 && alpha.max_scaled_error <= opts.tol(sheval::SHAT_TOLERANCE),
        format!(
            "{} reconstruction and {} factorization checks, max scaled error {:.2e}",
            alpha.reconstruction_checks, alpha.factorization_checks, alpha.max_scaled_error
        ),
    );
    r.check(
        "alphahat_l1_bound",
        alpha.l1_failures.is_empty(),
        format!("{} checks, worst l1/bound {:.4}", alpha.l1_checks, alpha.worst_l1_ratio),
    );

    let mut eta_worst: f64 = 0.0;
    let mut eta_checks = 0u64;
    for l2 in [5u64, 7, 9, 25] {
        for (c1, c2) in [(2u64, 3u64), (4, 6), (8, 11)] {
            for n2 in 1..=4i64 {
                for m in 1..=12i64 {
                    if gcd(c1 * c2 * 13, l2) != 1 || crate::arith::gcd_i(n2 * m, l2) != 1 {
                        continue;
                    }
                    let e = eta_separation_check(l2, c1, c2, 13, n2, m).or_fail(S)?;
                    eta_worst = eta_worst.max(e.abs_error);
                    eta_checks += 1;
                }
            }
        }
    }
    r.check(
        "eta_separation",
        eta_worst <= opts.tol(sheval::ETA_TOLERANCE) * 25.0,
        format!("{eta_checks} checks, max error {eta_worst:.2e}"),
    );
    r.data = json!({ "shat": shat, "alpha": alpha, "eta": { "checks": eta_checks, "max_error": eta_worst } });
    Ok(r)
}

// ---------------------------------------------------------------- kfrac

#[derive(Debug, Clone, PartialEq)]
pub struct KfracPlan {
    pub small: u64,
    pub large: u64,
    pub trials: usize,
    pub a: i64,
}

impl Default for KfracPlan {
    fn default() -> Self {
        KfracPlan {
            small: 64,
            large: 512,
            trials: 200,
            a: 1,
        }
    }
}

pub fn kfrac_suite(opts: &SuiteOptions, plan: &KfracPlan) -> Result<SuiteReport, SuiteError> {
    const S: &str = "kfrac-experiment";
    let mut r = SuiteReport::new("kfrac-experiment", opts);
    let cfg = |m: u64, k: u64, trials: usize, model: CoefficientModel| ExperimentConfig {
        m,
        n: m,
        k,
        a: plan.a,
        trials,
        seed: opts.seed,
        model,
        eps: kfrac::DEFAULT_EPS,
    };
    let small = cancellation_experiment(&cfg(plan.small, 0, plan.trials, CoefficientModel::PlusMinusOne)).or_fail(S)?;
    let large = cancellation_experiment(&cfg(plan.large, 0, plan.trials, CoefficientModel::PlusMinusOne)).or_fail(S)?;
    let med = |rep: &kfrac::ExperimentReport| rep.ratio_trivial.map(|q| q.median).unwrap_or(f64::NAN);
    let (ms, ml) = (med(&small), med(&large));
    r.check(
        "bilinear_cancellation_grows",
        ml < ms,
        format!("median |sum|/(‖α‖‖β‖√(MN)): {ms:.4e} at M = N = {}, {ml:.4e} at {}", plan.small, plan.large),
    );
    let tri = cancellation_experiment(&cfg(plan.small, 16, plan.trials.min(50), CoefficientModel::UnitPhase)).or_fail(S)?;
    let structured = cancellation_experiment(&cfg(
        plan.small,
        0,
        plan.trials.min(50),
        CoefficientModel::Structured { p: 101, amplifier: 10 },
    ))
    .or_fail(S)?;
    let mut all = Vec::new();
    for rep in [&small, &large, &tri, &structured] {
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).or_fail(S)?;
        all.push(buf);
    }
    let mut merged = Vec::new();
    for (i, buf) in all.into_iter().enumerate() {
        let text = String::from_utf8(buf).or_fail(S)?;
        let body = if i == 0 { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
        merged.extend_from_slice(body.as_bytes());
    }
    r.table("trials", merged);
    let summary = |rep: &kfrac::ExperimentReport| {
        json!({
            "m": rep.config.m, "n": rep.config.n, "k": rep.config.k, "model": rep.config.model.name(),
            "trials": rep.rows.len(), "ratio_trivial": rep.ratio_trivial, "ratio_rhs": rep.ratio_rhs,
        })
    };
    r.data = json!({ "experiments": [summary(&small), summary(&large), summary(&tri), summary(&structured)] });
    Ok(r)
}

// ---------------------------------------------------------------- pipeline

pub fn pipeline_suite(opts: &SuiteOptions) -> Result<SuiteReport, SuiteError> {
    const S: &str = "pipeline-run";
    let mut r = SuiteReport::new("pipeline-run", opts);
    let window = SmoothTestFunction::new(0.0, 1.0).or_fail(S)?;
    let mut poisson = Vec::new();
    for (i, (inst, z)) in shipped_poisson_instances().into_iter().enumerate() {
        let v = v_poisson_check(&inst, z, &window).or_fail(S)?;
        r.check(
            format!("poisson_instance{i}"),
            v.residual <= opts.tol(pipeline::POISSON_TOLERANCE) * v.v_direct.norm().max(1.0)
                && v.ihat_tail <= pipeline::IHAT_TAIL_TOLERANCE,
            format!(
                "V = {:.6e}, residual {:.2e}, Î tail {:.2e}, radius {}",
                v.v_direct.re, v.residual, v.ihat_tail, v.truncation
            ),
        );
        poisson.push(v);
    }
    let mut runs = Vec::new();
    for cfg in shipped_configs(opts.seed).or_fail(S)? {
        let p = run_pipeline(&cfg).or_fail(S)?;
        let tag = format!("p{}_N{}_L{}_j{}", p.p, p.n, p.l, p.j);
        r.check(
            format!("amplified_sum_{tag}"),
            p.amplified.residual <= opts.tol(pipeline::AMPLIFIER_TOLERANCE) * p.amplified.scale,
            format!("residual {:.2e} at scale {:.2e}", p.amplified.residual, p.amplified.scale),
        );
        r.check(
            format!("delta_insertion_{tag}"),
            p.delta.pass && p.delta.residual <= opts.tol(pipeline::DELTA_TOLERANCE),
            format!("relative residual {:.2e} over {} shifts", p.delta.residual, p.delta.shifts),
        );
        for id in &p.partition.identities {
            r.check(
                format!("{}_{tag}", id.name),
                id.residual <= opts.tol(pipeline::PARTITION_TOLERANCE) * p.partition.scale,
                format!("residual {:.2e} at scale {:.2e}", id.residual, p.partition.scale),
            );
        }
        r.check(
            format!("zero_frequency_offdiagonal_{tag}"),
            p.partition.zero_freq_offdiag_max <= pipeline::ZERO_FREQUENCY_TOLERANCE,
            format!("max |Ŝ(0)| for c₁ ≠ c₂: {:.2e}", p.partition.zero_freq_offdiag_max),
        );
        let mut buf = Vec::new();
        p.partition.write_csv(&mut buf).or_fail(S)?;
        r.table(&format!("partition_{tag}"), buf);
        runs.push(p);
    }
    r.data = json!({ "poisson": poisson, "runs": runs });
    Ok(r)
}

// ---------------------------------------------------------------- exponents

fn q_json(x: &Q) -> Value {
    Value::String(fmt_q(x))
}

pub fn exponents_suite(opts: &SuiteOptions, j: u32, sigma: Q) -> Result<SuiteReport, SuiteError> {
    let f = |e: ExponentError| match e {
        ExponentError::InvalidSigma(_) | ExponentError::InvalidJ(_) => SuiteError::Config(e.to_string()),
        other => SuiteError::Failed {
            suite: "exponents-solve",
            message: other.to_string(),
        },
    };
    let mut r = SuiteReport::new("exponents-solve", opts);
    let ledger = proposition_ledger(j, sigma).map_err(f)?;
    let result = final_delta(j, sigma).map_err(f)?;
    let balance = balance_l(&ledger).map_err(f)?;
    let s = Ratio::new(1, 20);
    let d2 = final_delta(2, s).map_err(f)?.delta;
    let d1 = final_delta(1, s).map_err(f)?.delta;
    r.check("delta_j2_sigma_1_20", d2 == Ratio::new(1, 524), format!("δ = {}", fmt_q(&d2)));
    r.check("delta_j1_sigma_1_20", d1 == Ratio::new(1, 302), format!("δ = {}", fmt_q(&d1)));
    let b2 = balance_l(&proposition_ledger(2, s).map_err(f)?).map_err(f)?;
    let want2 = (
        -(Q::from(2) - Q::from(7) * s) / (Q::from(14) - Q::from(18) * s),
        (Q::from(1) - Q::from(3) * s) / (Q::from(7) - Q::from(9) * s),
    );
    r.check(
        "optimal_l_j2",
        (b2.slope, b2.intercept) == want2,
        format!("x_L = {}·x_N + {}", fmt_q(&b2.slope), fmt_q(&b2.intercept)),
    );
    let b1 = balance_l(&proposition_ledger(1, s).map_err(f)?).map_err(f)?;
    let want1 = (
        -(Q::from(2) - Q::from(7) * s) / (Q::from(8) - Q::from(9) * s),
        (Q::from(2) - Q::from(6) * s) / (Q::from(8) - Q::from(9) * s),
    );
    r.check(
        "optimal_l_j1",
        (b1.slope, b1.intercept) == want1,
        format!("x_L = {}·x_N + {}", fmt_q(&b1.slope), fmt_q(&b1.intercept)),
    );
    let d0 = final_delta(2, Q::from(0)).map_err(f)?.delta;
    r.check("trilinear_input_helps", d0 < d2, format!("δ(σ = 0) = {}", fmt_q(&d0)));
    let mut prev = Q::from(-1);
    let mut monotone = true;
    for k in 0..=5 {
        let d = final_delta(2, Ratio::new(k, 100)).map_err(f)?.delta;
        monotone &= d >= prev;
        prev = d;
    }
    r.check("delta_monotone_in_sigma", monotone, "σ ∈ {0, 1/100, …, 5/100}");
    r.data = json!({
        "j": j,
        "sigma": q_json(&sigma),
        "delta": q_json(&result.delta),
        "result": result,
        "balance": balance,
        "ledger": ledger,
        "literature": exponents::literature_deltas().into_iter().map(|(n, d)| json!({ "source": n, "delta": q_json(&d) })).collect::<Vec<_>>(),
    });
    Ok(r)
}
