//! Acceptance criteria 1 to 9. Each test prints one `criterion N` line and
//! fails if the criterion fails. Tolerances and runtime budgets are literals.
//!
//! Run with `cargo test -p deltalab-core --test acceptance -- --nocapture --test-threads 1`.

use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use deltalab_core::charsums::characters_mod;
use deltalab_core::deltasym::DeltaExpansion;
use deltalab_core::exponents::{balance_l, final_delta, proposition_ledger, Q};
use deltalab_core::kfrac::{cancellation_experiment, CoefficientModel, ExperimentConfig};
use deltalab_core::modforms::{amplifier_eval, coeffs_delta_form, coeffs_divisor, coeffs_synthetic, hecke_check};
use deltalab_core::oscint::{dual_length, voronoi_check, SmoothTestFunction};
use deltalab_core::pipeline::{run_pipeline, shipped_configs, shipped_poisson_instances, v_poisson_check};
use deltalab_core::sheval::{run_alpha_grid, run_shat_grid, AlphaGrid, ShatGrid};
use deltalab_core::Complex64;

const SEED: u64 = 524;

/// Criteria run one at a time so each runtime is measured alone.
static SERIAL: Mutex<()> = Mutex::new(());

fn exclusive() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, pass: bool, started: Instant, budget: Duration, detail: String) {
    let elapsed = started.elapsed();
    let in_time = elapsed <= budget;
    println!(
        "criterion {n} [{name}]: {} ({detail}; {:.2?} of {:?})",
        if pass && in_time { "PASS" } else { "FAIL" },
        elapsed,
        budget
    );
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime budget: {elapsed:?}");
}

fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

fn primes_in(lo_exclusive: f64, hi: u64) -> u64 {
    (2..=hi)
        .filter(|&n| n as f64 > lo_exclusive && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
        .count() as u64
}

#[test]
fn criterion_1_exponents() {
    let _guard = exclusive();
    let t = Instant::now();
    let d2 = final_delta(2, q(1, 20)).unwrap().delta;
    let d1 = final_delta(1, q(1, 20)).unwrap().delta;
    let s = q(1, 20);
    let b2 = balance_l(&proposition_ledger(2, s).unwrap()).unwrap();
    let b1 = balance_l(&proposition_ledger(1, s).unwrap()).unwrap();
    // L = N^{−(2−7σ)/(14−18σ)} p^{(1−3σ)/(7−9σ)} and its conditional analogue
    let l2 = (-(q(2, 1) - q(7, 1) * s) / (q(14, 1) - q(18, 1) * s), (q(1, 1) - q(3, 1) * s) / (q(7, 1) - q(9, 1) * s));
    let l1 = (-(q(2, 1) - q(7, 1) * s) / (q(8, 1) - q(9, 1) * s), (q(2, 1) - q(6, 1) * s) / (q(8, 1) - q(9, 1) * s));
    let pass = d2 == q(1, 524) && d1 == q(1, 302) && (b2.slope, b2.intercept) == l2 && (b1.slope, b1.intercept) == l1;
    verdict(
        1,
        "exponent reproduction",
        pass,
        t,
        Duration::from_secs(1),
        format!(
            "δ(2,1/20) = {d2}, δ(1,1/20) = {d1}, x_L = {}·x_N + {} (j=2), {}·x_N + {} (j=1)",
            b2.slope, b2.intercept, b1.slope, b1.intercept
        ),
    );
}

#[test]
fn criterion_2_delta_identity() {
    let _guard = exclusive();
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for c in [10.0, 20.0, 40.0, 80.0] {
        let e = DeltaExpansion::new(c).unwrap();
        for n in -200i64..=200 {
            let want = if n == 0 { 1.0 } else { 0.0 };
            worst = worst.max((e.delta_eval(n).unwrap() - want).abs());
        }
    }
    verdict(
        2,
        "delta-symbol identity",
        worst <= 1e-6,
        t,
        Duration::from_secs(30),
        format!("max |δ(n) − [n=0]| = {worst:.2e} over C ∈ {{10,20,40,80}}, |n| ≤ 200"),
    );
}

#[test]
fn criterion_3_shat_oracle() {
    let _guard = exclusive();
    let t = Instant::now();
    let grid = ShatGrid {
        c_max: 24,
        primes: vec![11, 13],
        ell_pairs: vec![(3, 5), (5, 7), (3, 9)],
        n_max: 4,
    };
    let r = run_shat_grid(&grid).unwrap();
    let pass = r.failures.is_empty() && r.max_scaled_error <= 1e-8 && r.forced_zero_checks > 0 && r.zero_formula_checks > 0;
    verdict(
        3,
        "Ŝ oracle equivalence",
        pass,
        t,
        Duration::from_secs(180),
        format!(
            "{} instances, {} evaluations, max |closed − brute|/(c₁c₂) = {:.2e}, {} forced zeros, {} Ŝ(0) checks, {} failures",
            r.instances,
            r.evaluations,
            r.max_scaled_error,
            r.forced_zero_checks,
            r.zero_formula_checks,
            r.failures.len()
        ),
    );
}

#[test]
fn criterion_4_alphahat() {
    let _guard = exclusive();
    let t = Instant::now();
    let grid = AlphaGrid {
        prime_power_max: 27,
        ..AlphaGrid::default()
    };
    let r = run_alpha_grid(&grid).unwrap();
    let pass = r.identity_failures == 0 && r.max_scaled_error <= 1e-8 && r.l1_failures.is_empty() && r.l1_checks > 0;
    verdict(
        4,
        "α̂ Fourier machinery",
        pass,
        t,
        Duration::from_secs(60),
        format!(
            "{} reconstruction, {} factorization, {} L1 checks; max error/modulus {:.2e}; worst L1 ratio {:.3}",
            r.reconstruction_checks, r.factorization_checks, r.l1_checks, r.max_scaled_error, r.worst_l1_ratio
        ),
    );
}

#[test]
fn criterion_5_voronoi() {
    let _guard = exclusive();
    let t = Instant::now();
    let seq = coeffs_delta_form(20_000).unwrap();
    let grid: [(i64, u64, f64, f64); 12] = [
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
    let mut worst: f64 = 0.0;
    for (a, c, x, w) in grid {
        let h = SmoothTestFunction::new(x, w).unwrap();
        let r = voronoi_check(&seq, a, c, &h, dual_length(c, &h)).unwrap();
        worst = worst.max(r.rel_error);
    }
    verdict(
        5,
        "Voronoi for Δ",
        worst <= 1e-5,
        t,
        Duration::from_secs(60),
        format!("max rel_error {worst:.2e} over 12 (a, c, h) with c ≤ 10"),
    );
}

#[test]
fn criterion_6_poisson() {
    let _guard = exclusive();
    let t = Instant::now();
    let window = SmoothTestFunction::new(0.0, 1.0).unwrap();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut tail: f64 = 0.0;
    let mut zero_case = false;
    for (inst, z) in shipped_poisson_instances() {
        let r = v_poisson_check(&inst, z, &window).unwrap();
        let scaled = r.residual / r.v_direct.norm().max(1.0);
        worst = worst.max(scaled);
        tail = tail.max(r.ihat_tail);
        pass &= scaled <= 1e-4 && r.ihat_tail <= 1e-8;
        zero_case |= inst.d() == 0;
        if !r.windows_overlap {
            pass &= r.v_direct.norm() == 0.0 && r.v_poisson.norm() == 0.0;
        }
    }
    verdict(
        6,
        "Poisson V-identity",
        pass && zero_case,
        t,
        Duration::from_secs(60),
        format!("max |V_direct − V_poisson|/max(|V|,1) = {worst:.2e}; max |Î| beyond the radius / max|Î| = {tail:.2e}"),
    );
}

#[test]
fn criterion_7_hecke_amplifier() {
    let _guard = exclusive();
    let t = Instant::now();
    let chars = characters_mod(101);
    let mut worst: f64 = 0.0;
    let mut hecke = hecke_check(&coeffs_divisor(2500).unwrap(), 50).unwrap().pass
        && hecke_check(&coeffs_delta_form(900).unwrap(), 30).unwrap().pass;
    for s in 0..5u64 {
        let chi = &chars[1 + (SEED + 17 * s) as usize % 99];
        let lp = Complex64::from_polar(0.9, 0.7 * s as f64);
        let seq = coeffs_synthetic(10_000, chi, lp, SEED + s).unwrap();
        hecke &= hecke_check(&seq, 100).unwrap().pass;
        for l in [10u64, 20, 50, 100] {
            let a = amplifier_eval(&seq, l).unwrap().a;
            let count = primes_in(l as f64 / 2.0, l) as f64;
            worst = worst.max((a - Complex64::new(count, 0.0)).norm());
        }
    }
    verdict(
        7,
        "Hecke and amplifier identities",
        worst <= 1e-9 && hecke,
        t,
        Duration::from_secs(30),
        format!("max |A(L) − (π(L) − π(L/2))| = {worst:.2e} over 4 lengths × 5 sequences; Hecke checks pass: {hecke}"),
    );
}

#[test]
fn criterion_8_kloosterman_fractions() {
    let _guard = exclusive();
    let t = Instant::now();
    let cfg = |m: u64| ExperimentConfig {
        m,
        n: m,
        k: 0,
        a: 1,
        trials: 200,
        seed: SEED,
        model: CoefficientModel::PlusMinusOne,
        eps: 0.05,
    };
    let small = cancellation_experiment(&cfg(64)).unwrap();
    let large = cancellation_experiment(&cfg(512)).unwrap();
    let tri = cancellation_experiment(&ExperimentConfig {
        k: 16,
        trials: 50,
        model: CoefficientModel::UnitPhase,
        ..cfg(64)
    })
    .unwrap();
    for rep in [&small, &large, &tri] {
        let rhs = rep.ratio_rhs.unwrap();
        println!(
            "  ratio report M=N={} K={}: |sum|/RHS quartiles {:.3e} {:.3e} {:.3e}, max {:.3e}",
            rep.config.m, rep.config.k, rhs.q25, rhs.median, rhs.q75, rhs.max
        );
    }
    let (ms, ml) = (small.ratio_trivial.unwrap().median, large.ratio_trivial.unwrap().median);
    verdict(
        8,
        "Kloosterman-fraction cancellation",
        ml < ms,
        t,
        Duration::from_secs(300),
        format!("median |sum|/(‖α‖‖β‖√(MN)) = {ms:.4e} at 64, {ml:.4e} at 512"),
    );
}

#[test]
fn criterion_9_partitions() {
    let _guard = exclusive();
    let t = Instant::now();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut zero: f64 = 0.0;
    let mut identities = 0;
    for cfg in shipped_configs(SEED).unwrap() {
        let r = run_pipeline(&cfg).unwrap();
        for id in &r.partition.identities {
            let scaled = id.residual / r.partition.scale;
            worst = worst.max(scaled);
            pass &= scaled <= 1e-9;
            identities += 1;
        }
        zero = zero.max(r.partition.zero_freq_offdiag_max);
        pass &= r.partition.t_prime.norm() > 0.0;
    }
    verdict(
        9,
        "partition bookkeeping",
        pass && zero <= 1e-9,
        t,
        Duration::from_secs(180),
        format!("{identities} identities on 3 configurations, max residual/scale {worst:.2e}; max |Ŝ(0)| with c₁ ≠ c₂ = {zero:.2e}"),
    );
}
