//! Ramanujan sums, Kloosterman sums, Dirichlet characters and Gauss sums.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::arith::{
    self, euler_phi, factorize, gcd, gcd_i, inv_mod, lcm, modulo, pow_mod, KahanSum, RootTable,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CharsumError {
    #[error("rounding residual {residual} exceeds tolerance {tolerance} (n={n}, c={c})")]
    RoundingResidualTooLarge {
        n: i64,
        c: u64,
        residual: f64,
        tolerance: f64,
    },
    #[error("modulus {0} exceeds the supported range")]
    ModulusTooLarge(u64),
}

pub const BRUTEFORCE_MAX_MODULUS: u64 = 1_000_000;
pub const CHARACTER_MAX_MODULUS: u64 = 100_000;

/// `S(0,n;c) = Σ*_{h mod c} e(hn/c)` via `Σ_{d|(n,c)} d·μ(c/d)`.
pub fn ramanujan_sum(n: i64, c: u64) -> i64 {
    assert!(c >= 1, "ramanujan_sum: modulus must be positive");
    let g = gcd_i(n, c);
    arith::divisors(g)
        .into_iter()
        .map(|d| d as i64 * arith::mobius(c / d))
        .sum()
}

/// Ramanujan sum by direct summation over units, rounded to an integer.
pub fn ramanujan_sum_bruteforce(n: i64, c: u64) -> Result<i64, CharsumError> {
    if c > BRUTEFORCE_MAX_MODULUS {
        return Err(CharsumError::ModulusTooLarge(c));
    }
    let nr = modulo(n, c);
    let mut acc = KahanSum::new();
    let mut terms = 0u64;
    for h in 0..c {
        if gcd(h, c) == 1 {
            acc.add(arith::e_frac_wide(h as i128 * nr as i128, c));
            terms += 1;
        }
    }
    let z = acc.value();
    let rounded = z.re.round();
    let residual = (z.re - rounded).abs().max(z.im.abs());
    let tolerance = 1e-6 * terms as f64;
    if residual >= tolerance {
        return Err(CharsumError::RoundingResidualTooLarge {
            n,
            c,
            residual,
            tolerance,
        });
    }
    Ok(rounded as i64)
}

/// `S(a,b;c) = Σ*_{x mod c} e((ax + b x̄)/c)` by direct summation.
pub fn kloosterman_sum(a: i64, b: i64, c: u64) -> Complex64 {
    assert!((1..=BRUTEFORCE_MAX_MODULUS).contains(&c), "kloosterman_sum: modulus out of range");
    let roots = RootTable::new(c);
    let (ar, br) = (modulo(a, c) as u128, modulo(b, c) as u128);
    let mut acc = KahanSum::new();
    for x in 0..c {
        if gcd(x, c) != 1 {
            continue;
        }
        let xb = inv_mod(x as i64, c).expect("unit has inverse");
        let k = (ar * x as u128 + br * xb as u128) % c as u128;
        acc.add(roots.at_residue(k as u64));
    }
    acc.value()
}

/// One cyclic factor of `(Z/p^e)^*`, with its discrete-log table.
#[derive(Debug, Clone)]
struct CyclicFactor {
    order: u64,
    generator: u64,
    log: Vec<u32>,
}

/// The unit group modulo one prime power.
#[derive(Debug, Clone)]
struct Component {
    prime: u64,
    exponent: u32,
    modulus: u64,
    factors: Vec<CyclicFactor>,
}

const NO_LOG: u32 = u32::MAX;

fn primitive_root_odd(p: u64) -> u64 {
    let fac = factorize(p - 1);
    (2..p)
        .find(|&g| fac.primes().all(|r| pow_mod(g, (p - 1) / r, p) != 1))
        .expect("odd primes have primitive roots")
}

impl Component {
    fn new(prime: u64, exponent: u32) -> Self {
        let modulus = prime.pow(exponent);
        let factors = if prime == 2 {
            Self::two_adic(exponent, modulus)
        } else {
            let mut g = primitive_root_odd(prime);
            if exponent > 1 && pow_mod(g, prime - 1, prime * prime) == 1 {
                g += prime;
            }
            let order = (prime - 1) * prime.pow(exponent - 1);
            let mut log = vec![NO_LOG; modulus as usize];
            let mut v = 1u64;
            for k in 0..order {
                log[v as usize] = k as u32;
                v = v * g % modulus;
            }
            vec![CyclicFactor {
                order,
                generator: g,
                log,
            }]
        };
        Component {
            prime,
            exponent,
            modulus,
            factors,
        }
    }

    fn two_adic(exponent: u32, modulus: u64) -> Vec<CyclicFactor> {
        match exponent {
            1 => vec![CyclicFactor {
                order: 1,
                generator: 1,
                log: vec![NO_LOG, 0],
            }],
            2 => vec![CyclicFactor {
                order: 2,
                generator: 3,
                log: vec![NO_LOG, 0, NO_LOG, 1],
            }],
            _ => {
                // Every unit is ±5^k.
                let half = modulus / 4;
                let mut sign = vec![NO_LOG; modulus as usize];
                let mut five = vec![NO_LOG; modulus as usize];
                let mut v = 1u64;
                for k in 0..half {
                    sign[v as usize] = 0;
                    five[v as usize] = k as u32;
                    let w = modulus - v;
                    sign[w as usize] = 1;
                    five[w as usize] = k as u32;
                    v = v * 5 % modulus;
                }
                vec![
                    CyclicFactor {
                        order: 2,
                        generator: modulus - 1,
                        log: sign,
                    },
                    CyclicFactor {
                        order: half,
                        generator: 5,
                        log: five,
                    },
                ]
            }
        }
    }
}

/// `(Z/q)^*` as a product of cyclic factors with discrete-log tables.
#[derive(Debug)]
pub struct UnitGroup {
    modulus: u64,
    components: Vec<Component>,
    exponent: u64,
    roots: RootTable,
}

impl UnitGroup {
    pub fn new(q: u64) -> Arc<Self> {
        assert!(
            (1..=CHARACTER_MAX_MODULUS).contains(&q),
            "character modulus {q} out of range"
        );
        let components: Vec<Component> = factorize(q)
            .pairs()
            .iter()
            .map(|&(p, e)| Component::new(p, e))
            .collect();
        let exponent = components
            .iter()
            .flat_map(|c| c.factors.iter().map(|f| f.order))
            .fold(1, lcm);
        Arc::new(UnitGroup {
            modulus: q,
            components,
            exponent,
            roots: RootTable::new(exponent),
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Exponent of the group (Carmichael's function of the modulus).
    pub fn exponent(&self) -> u64 {
        self.exponent
    }

    pub fn order(&self) -> u64 {
        self.factor_orders().product()
    }

    fn factor_orders(&self) -> impl Iterator<Item = u64> + '_ {
        self.components
            .iter()
            .flat_map(|c| c.factors.iter().map(|f| f.order))
    }

    fn num_factors(&self) -> usize {
        self.components.iter().map(|c| c.factors.len()).sum()
    }

    /// Discrete logs of `a` in each cyclic factor; `None` if `a` is not a unit.
    fn logs(&self, a: i64) -> Option<Vec<u64>> {
        let mut out = Vec::with_capacity(self.num_factors());
        for comp in &self.components {
            let r = modulo(a, comp.modulus) as usize;
            for f in &comp.factors {
                let l = f.log[r];
                if l == NO_LOG {
                    return None;
                }
                out.push(l as u64);
            }
        }
        Some(out)
    }
}

/// A Dirichlet character, stored by the images of the cyclic generators.
///
/// The image of the `i`-th generator is `e(k_i / order_i)`.
#[derive(Clone)]
pub struct DirichletCharacter {
    group: Arc<UnitGroup>,
    exps: Vec<u64>,
    conductor: u64,
}

impl fmt::Debug for DirichletCharacter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletCharacter")
            .field("modulus", &self.group.modulus)
            .field("exps", &self.exps)
            .field("conductor", &self.conductor)
            .finish()
    }
}

impl PartialEq for DirichletCharacter {
    fn eq(&self, other: &Self) -> bool {
        self.group.modulus == other.group.modulus && self.exps == other.exps
    }
}

impl DirichletCharacter {
    pub fn from_exponents(group: Arc<UnitGroup>, exps: Vec<u64>) -> Self {
        assert_eq!(exps.len(), group.num_factors(), "one exponent per cyclic factor");
        let exps: Vec<u64> = exps
            .iter()
            .zip(group.factor_orders())
            .map(|(&k, n)| k % n)
            .collect();
        let conductor = compute_conductor(&group, &exps);
        DirichletCharacter {
            group,
            exps,
            conductor,
        }
    }

    pub fn principal(q: u64) -> Self {
        let group = UnitGroup::new(q);
        let n = group.num_factors();
        Self::from_exponents(group, vec![0; n])
    }

    pub fn modulus(&self) -> u64 {
        self.group.modulus
    }

    pub fn group(&self) -> &Arc<UnitGroup> {
        &self.group
    }

    pub fn exponents(&self) -> &[u64] {
        &self.exps
    }

    pub fn is_principal(&self) -> bool {
        self.exps.iter().all(|&k| k == 0)
    }

    /// Order of the character in the dual group.
    pub fn order(&self) -> u64 {
        self.exps
            .iter()
            .zip(self.group.factor_orders())
            .map(|(&k, n)| n / gcd(k, n))
            .fold(1, lcm)
    }

    pub fn is_real(&self) -> bool {
        self.order() <= 2
    }

    /// `χ(a) = e(index/E)` with `E` the group exponent; `None` when `gcd(a,q) > 1`.
    pub fn index(&self, a: i64) -> Option<u64> {
        let logs = self.group.logs(a)?;
        let e = self.group.exponent as u128;
        let mut idx: u128 = 0;
        for ((l, &k), n) in logs.iter().zip(&self.exps).zip(self.group.factor_orders()) {
            idx += (*l as u128) * (k as u128) * (e / n as u128);
        }
        Some((idx % e) as u64)
    }

    pub fn eval(&self, a: i64) -> Complex64 {
        match self.index(a) {
            Some(i) => self.group.roots.at_residue(i),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn conj(&self) -> Self {
        let exps = self
            .exps
            .iter()
            .zip(self.group.factor_orders())
            .map(|(&k, n)| (n - k) % n)
            .collect();
        Self::from_exponents(self.group.clone(), exps)
    }

    /// Pointwise product of two characters with the same modulus.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.modulus(), other.modulus());
        let exps = self
            .exps
            .iter()
            .zip(&other.exps)
            .zip(self.group.factor_orders())
            .map(|((&a, &b), n)| (a + b) % n)
            .collect();
        Self::from_exponents(self.group.clone(), exps)
    }

    pub fn conductor(&self) -> u64 {
        self.conductor
    }

    pub fn is_primitive(&self) -> bool {
        self.conductor == self.group.modulus
    }

    /// The primitive character modulo the conductor that induces `self`.
    pub fn primitive(&self) -> Self {
        let qs = self.conductor;
        let target = UnitGroup::new(qs);
        let q = self.group.modulus;
        let mut exps = Vec::with_capacity(target.num_factors());
        let target_orders: Vec<u64> = target.factor_orders().collect();
        let mut orders = target_orders.into_iter();
        for comp in &target.components {
            // Lift each generator to a unit mod q that is 1 at the other primes.
            let big = self
                .group
                .components
                .iter()
                .find(|c| c.prime == comp.prime)
                .expect("conductor divides modulus");
            let rest = q / big.modulus;
            for f in &comp.factors {
                let n = orders.next().unwrap();
                let lift = if rest == 1 {
                    f.generator
                } else {
                    arith::crt_combine(&[(f.generator as i64, big.modulus), (1, rest)])
                        .expect("coprime parts")
                        .0
                };
                let idx = self.index(lift as i64).expect("lift is a unit");
                let scaled = idx as u128 * n as u128;
                debug_assert_eq!(scaled % self.group.exponent as u128, 0);
                exps.push((scaled / self.group.exponent as u128) as u64 % n);
            }
        }
        Self::from_exponents(target, exps)
    }

    /// `τ(χ) = Σ_{x mod q} χ(x) e(x/q)`.
    pub fn gauss_sum(&self) -> Complex64 {
        gauss_sum(self)
    }
}

fn compute_conductor(group: &UnitGroup, exps: &[u64]) -> u64 {
    let mut cond = 1u64;
    let mut i = 0;
    for comp in &group.components {
        let ks = &exps[i..i + comp.factors.len()];
        i += comp.factors.len();
        let part = if comp.prime == 2 {
            match comp.exponent {
                1 => 1,
                2 => {
                    if ks[0] == 0 {
                        1
                    } else {
                        4
                    }
                }
                e => {
                    let (sign, five) = (ks[0], ks[1]);
                    if five == 0 {
                        if sign == 0 {
                            1
                        } else {
                            4
                        }
                    } else {
                        2u64.pow(e - five.trailing_zeros())
                    }
                }
            }
        } else {
            let k = ks[0];
            if k == 0 {
                1
            } else {
                let mut v = 0;
                let mut kk = k;
                while kk.is_multiple_of(comp.prime) {
                    kk /= comp.prime;
                    v += 1;
                }
                comp.prime.pow(comp.exponent - v)
            }
        };
        cond *= part;
    }
    cond
}

/// All `φ(q)` characters modulo `q`, principal first.
pub fn characters_mod(q: u64) -> Vec<DirichletCharacter> {
    let group = UnitGroup::new(q);
    let orders: Vec<u64> = group.factor_orders().collect();
    let total: u64 = orders.iter().product();
    let mut out = Vec::with_capacity(total as usize);
    for mut idx in 0..total {
        let mut exps = Vec::with_capacity(orders.len());
        for &n in &orders {
            exps.push(idx % n);
            idx /= n;
        }
        out.push(DirichletCharacter::from_exponents(group.clone(), exps));
    }
    out
}

pub fn gauss_sum(chi: &DirichletCharacter) -> Complex64 {
    let q = chi.modulus();
    let roots = RootTable::new(q);
    let mut acc = KahanSum::new();
    for x in 0..q {
        if let Some(i) = chi.index(x as i64) {
            acc.add(chi.group.roots.at_residue(i) * roots.at_residue(x));
        }
    }
    acc.value()
}

/// Right side of `τ(χ) = μ(q/q*)·χ*(q/q*)·τ(χ*)` for the primitive `χ*` inducing `χ`.
pub fn gauss_sum_via_primitive(chi: &DirichletCharacter) -> Complex64 {
    let prim = chi.primitive();
    let ratio = chi.modulus() / prim.modulus();
    let mu = arith::mobius(ratio) as f64;
    mu * prim.eval(ratio as i64) * gauss_sum(&prim)
}

pub fn conductor(chi: &DirichletCharacter) -> u64 {
    chi.conductor()
}

/// `φ(q)`, re-exported for convenience in character sums.
pub fn phi(q: u64) -> u64 {
    euler_phi(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn ramanujan_examples() {
        assert_eq!(ramanujan_sum(12345, 1), 1);
        assert_eq!(ramanujan_sum(12, 4), 2);
        assert_eq!(ramanujan_sum(6, 4), -2);
        assert_eq!(ramanujan_sum(0, 5), 4);
        assert_eq!(ramanujan_sum(1, 4), 0);
        assert_eq!(ramanujan_sum(-6, 4), -2);
    }

    #[test]
    fn ramanujan_bruteforce_examples() {
        assert_eq!(ramanujan_sum_bruteforce(0, 5), Ok(4));
        assert_eq!(ramanujan_sum_bruteforce(1, 4), Ok(0));
        assert_eq!(ramanujan_sum_bruteforce(6, 4), Ok(-2));
        assert_eq!(ramanujan_sum_bruteforce(7, 1), Ok(1));
    }

    #[test]
    fn kloosterman_examples() {
        assert!(close(kloosterman_sum(1, 1, 2), Complex64::new(1.0, 0.0), 1e-12));
        let k = kloosterman_sum(1, 1, 5);
        assert!((k.re - 0.381966011250105).abs() < 1e-12);
        assert!(k.im.abs() < 1e-12);
        for (n, c) in [(0, 7), (3, 12), (10, 30)] {
            let z = kloosterman_sum(0, n, c);
            assert!(close(z, Complex64::new(ramanujan_sum(n, c) as f64, 0.0), 1e-9));
        }
    }

    #[test]
    fn character_counts() {
        assert_eq!(characters_mod(1).len(), 1);
        let five = characters_mod(5);
        assert_eq!(five.len(), 4);
        assert_eq!(five.iter().filter(|c| c.is_real() && !c.is_principal()).count(), 1);
        let twelve = characters_mod(12);
        assert_eq!(twelve.len(), 4);
        assert!(twelve.iter().all(|c| c.is_real()));
        assert_eq!(characters_mod(32).len(), 16);
    }

    #[test]
    fn conductor_examples() {
        assert_eq!(DirichletCharacter::principal(45).conductor(), 1);
        let four: Vec<_> = characters_mod(4);
        assert_eq!(four.iter().map(|c| c.conductor()).max(), Some(4));
        let order_six = characters_mod(9).into_iter().find(|c| c.order() == 6).unwrap();
        assert_eq!(order_six.conductor(), 9);
        // mod 8: χ(5) = −1 is not induced from mod 4.
        let eight = characters_mod(8);
        let c = eight
            .iter()
            .find(|c| c.eval(5).re < 0.0 && c.eval(-1).re > 0.0)
            .unwrap();
        assert_eq!(c.conductor(), 8);
    }

    #[test]
    fn gauss_sum_real_mod_five() {
        let chi = characters_mod(5)
            .into_iter()
            .find(|c| c.is_real() && !c.is_principal())
            .unwrap();
        let g = gauss_sum(&chi);
        assert!(close(g, Complex64::new(5f64.sqrt(), 0.0), 1e-12));
        assert!(close(gauss_sum(&DirichletCharacter::principal(1)), Complex64::new(1.0, 0.0), 1e-15));
    }

    #[test]
    fn primitive_of_imprimitive() {
        for q in [12u64, 20, 24, 36, 40, 45, 63] {
            for chi in characters_mod(q) {
                let prim = chi.primitive();
                assert_eq!(prim.modulus(), chi.conductor());
                assert!(prim.is_primitive());
                for a in 0..q as i64 {
                    if gcd_i(a, q) == 1 {
                        assert!(close(chi.eval(a), prim.eval(a), 1e-12), "q={q} a={a}");
                    }
                }
            }
        }
    }

    #[test]
    fn conj_and_mul() {
        for chi in characters_mod(21) {
            let prod = chi.mul(&chi.conj());
            assert!(prod.is_principal());
            for a in 1..21 {
                assert!(close(chi.conj().eval(a), chi.eval(a).conj(), 1e-12));
            }
        }
    }
}
