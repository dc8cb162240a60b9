use deltalab_core::arith::{crt_combine, gcd, inv_mod, modulo, num_divisors, reciprocity_split};
use deltalab_core::charsums::{characters_mod, kloosterman_sum, ramanujan_sum, ramanujan_sum_bruteforce};
use deltalab_core::deltasym::DeltaExpansion;
use deltalab_core::exponents::{final_delta, Q};
use deltalab_core::modforms::{coeffs_divisor, coeffs_synthetic, hecke_check};
use deltalab_core::sheval::{shat_bruteforce, shat_closed, ShevalInstance};
use deltalab_core::Complex64;
use proptest::prelude::*;

const PRIMES: [u64; 6] = [5, 7, 11, 13, 17, 19];

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_times_value_is_one(a in -10_000i64..10_000, q in 2u64..5_000) {
        prop_assume!(gcd(modulo(a, q), q) == 1);
        let inv = inv_mod(a, q).unwrap();
        prop_assert!(inv < q);
        prop_assert_eq!((modulo(a, q) as u128 * inv as u128 % q as u128) as u64, 1);
    }

    #[test]
    fn inverse_fails_on_shared_factor(a in 1i64..1_000, k in 2u64..50) {
        let q = a as u64 * k;
        prop_assume!(a > 1);
        prop_assert!(inv_mod(a, q).is_err());
    }

    #[test]
    fn crt_solution_satisfies_each_congruence(r1 in -500i64..500, r2 in -500i64..500, q1 in 1u64..300, q2 in 1u64..300) {
        prop_assume!(gcd(q1, q2) == 1);
        let (x, m) = crt_combine(&[(r1, q1), (r2, q2)]).unwrap();
        prop_assert_eq!(m, q1 * q2);
        prop_assert!(x < m);
        prop_assert_eq!(x % q1, modulo(r1, q1));
        prop_assert_eq!(x % q2, modulo(r2, q2));
    }

    #[test]
    fn reciprocity_phases_cancel(a in -1_000i64..1_000, m in 1u64..400, n in 1u64..400) {
        prop_assume!(gcd(m, n) == 1);
        let (x, y, z) = reciprocity_split(a, m, n).unwrap();
        prop_assert!((x + y + z).is_zero());
    }

    #[test]
    fn ramanujan_closed_form_matches_direct_sum(n in -2_000i64..2_000, c in 1u64..400) {
        prop_assert_eq!(ramanujan_sum(n, c), ramanujan_sum_bruteforce(n, c).unwrap());
    }

    #[test]
    fn ramanujan_sum_is_bounded_by_gcd(n in -100_000i64..100_000, c in 1u64..5_000) {
        let g = if n == 0 { c } else { gcd(n.unsigned_abs(), c) };
        prop_assert!(ramanujan_sum(n, c).unsigned_abs() <= g);
    }

    #[test]
    fn ramanujan_sum_is_multiplicative_in_modulus(n in -5_000i64..5_000, c1 in 1u64..200, c2 in 1u64..200) {
        prop_assume!(gcd(c1, c2) == 1);
        prop_assert_eq!(ramanujan_sum(n, c1 * c2), ramanujan_sum(n, c1) * ramanujan_sum(n, c2));
    }

    #[test]
    fn kloosterman_sum_is_real_symmetric_and_weil_bounded(a in -300i64..300, b in -300i64..300, c in 1u64..300) {
        let s = kloosterman_sum(a, b, c);
        prop_assert!(s.im.abs() < 1e-9 * c as f64);
        prop_assert!(close(s, kloosterman_sum(b, a, c), 1e-9 * c as f64));
        let g = gcd(gcd(modulo(a, c), modulo(b, c)), c).max(1);
        let weil = num_divisors(c) as f64 * (g as f64).sqrt() * (c as f64).sqrt();
        prop_assert!(s.norm() <= weil + 1e-9);
    }

    #[test]
    fn characters_are_completely_multiplicative(q in 2u64..60, pick in any::<prop::sample::Index>(), a in -500i64..500, b in -500i64..500) {
        let chars = characters_mod(q);
        let chi = &chars[pick.index(chars.len())];
        prop_assert!(close(chi.eval(a * b), chi.eval(a) * chi.eval(b), 1e-12));
        prop_assert!(close(chi.eval(a + q as i64), chi.eval(a), 1e-12));
        prop_assert!(close(chi.conj().eval(a), chi.eval(a).conj(), 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_sequences_obey_hecke_relations(p_idx in 0usize..PRIMES.len(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let p = PRIMES[p_idx];
        let chars = characters_mod(p);
        let chi = &chars[pick.index(chars.len())];
        let seq = coeffs_synthetic(900, chi, Complex64::new(1.0, 0.0), seed).unwrap();
        let report = hecke_check(&seq, 30).unwrap();
        prop_assert!(report.pass, "deviation {}", report.max_deviation());
    }

    #[test]
    fn delta_expansion_detects_zero(n in -200i64..=200, c_idx in 0usize..3) {
        let c = [10.0, 20.0, 40.0][c_idx];
        let value = DeltaExpansion::new(c).unwrap().delta_eval(n).unwrap();
        let expected = if n == 0 { 1.0 } else { 0.0 };
        prop_assert!((value - expected).abs() <= 1e-6, "C = {c}, n = {n}: {value}");
    }

    #[test]
    fn shat_closed_form_matches_bruteforce(
        p_idx in 0usize..PRIMES.len(),
        l1 in 1u64..12, l2 in 1u64..12,
        n1 in -20i64..20, n2 in -20i64..20,
        c1 in 1u64..16, c2 in 1u64..16,
        m in -400i64..400,
    ) {
        let inst = ShevalInstance::new(PRIMES[p_idx], l1, l2, n1, n2, c1, c2).unwrap();
        prop_assume!(inst.closed_form_ok() && gcd(PRIMES[p_idx], c1 * c2) == 1);
        let closed = shat_closed(&inst, m).unwrap();
        let brute = shat_bruteforce(&inst, m).unwrap();
        prop_assert!(close(closed, brute, 1e-8 * (c1 * c2) as f64), "{closed} vs {brute}");
    }

    #[test]
    fn saving_grows_with_trilinear_exponent(j in 1u32..=2, a in 0i128..=50, b in 0i128..=50) {
        let (lo, hi) = (a.min(b), a.max(b));
        let d_lo = final_delta(j, Q::new(lo, 1000)).unwrap().delta;
        let d_hi = final_delta(j, Q::new(hi, 1000)).unwrap().delta;
        prop_assert!(d_lo <= d_hi, "j = {j}: {d_lo} > {d_hi}");
        prop_assert!(d_lo >= Q::new(0, 1));
    }
}

#[test]
fn divisor_function_obeys_hecke_relations() {
    let seq = coeffs_divisor(2_500).unwrap();
    assert!(hecke_check(&seq, 50).unwrap().pass);
}
