//! Exact exponent bookkeeping for the amplified second-moment bound.
//!
//! Every quantity is a power of `p`. With `x_N = log_p N` and `x_L = log_p L`,
//! an [`ExponentForm`] is the affine function `a·x_N + b·x_L + c`. A ledger
//! collects the addends of a bound for `log_p(|S(N)|/√N)` and the domain it
//! is valid on. [`final_delta`] plays `L` against `N` and returns the saving
//! `δ` in `L(1/2) ≪ p^{1/2−δ}`.

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

/// Exact rational used throughout.
pub type Q = Ratio<i128>;

pub const MAX_FORMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExponentError {
    #[error("sigma = {0} is outside [0, 1/9)")]
    InvalidSigma(String),
    #[error("j = {0} is not 1 or 2")]
    InvalidJ(u32),
    #[error("balancing needs distinct x_L coefficients, both are {0}")]
    DegenerateBalance(String),
    #[error("balancing needs exactly two forms, got {0}")]
    WrongFormCount(usize),
    #[error("no feasible point")]
    Infeasible,
    #[error("at most {MAX_FORMS} forms are supported, got {0}")]
    TooManyForms(usize),
    #[error("fallback forms may not depend on x_L ({0})")]
    FallbackDependsOnL(String),
}

fn q(n: i128, d: i128) -> Q {
    Ratio::new(n, d)
}

/// Renders `a/b`, or `a` for integers.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses `a/b` or an integer.
pub fn parse_q(s: &str) -> Result<Q, String> {
    s.trim()
        .parse::<Q>()
        .map_err(|e| format!("cannot parse {s:?} as a rational: {e}"))
}

fn ser_q<S: serde::Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_q(x))
}

/// `a·x_N + b·x_L + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentForm {
    #[serde(serialize_with = "ser_q")]
    pub n: Q,
    #[serde(serialize_with = "ser_q")]
    pub l: Q,
    #[serde(serialize_with = "ser_q")]
    pub constant: Q,
    pub label: String,
}

impl ExponentForm {
    pub fn new(n: Q, l: Q, constant: Q, label: impl Into<String>) -> Self {
        ExponentForm {
            n,
            l,
            constant,
            label: label.into(),
        }
    }

    pub fn eval(&self, x_n: Q, x_l: Q) -> Q {
        self.n * x_n + self.l * x_l + self.constant
    }
}

impl fmt::Display for ExponentForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: ({})·x_N + ({})·x_L + ({})",
            self.label,
            fmt_q(&self.n),
            fmt_q(&self.l),
            fmt_q(&self.constant)
        )
    }
}

/// The half-plane `a·x_N + b·x_L + c ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    #[serde(serialize_with = "ser_q")]
    pub n: Q,
    #[serde(serialize_with = "ser_q")]
    pub l: Q,
    #[serde(serialize_with = "ser_q")]
    pub constant: Q,
    pub label: String,
}

impl Constraint {
    pub fn new(n: Q, l: Q, constant: Q, label: impl Into<String>) -> Self {
        Constraint {
            n,
            l,
            constant,
            label: label.into(),
        }
    }

    pub fn holds(&self, x_n: Q, x_l: Q) -> bool {
        self.n * x_n + self.l * x_l + self.constant >= Q::zero()
    }
}

/// Addends of a bound together with its domain.
///
/// `forms` are summed (so the bound is their maximum up to constants).
/// `fallback` forms are alternative bounds valid everywhere; the final
/// exponent takes the smaller of the optimized ledger and the fallback.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentLedger {
    pub j: u32,
    #[serde(serialize_with = "ser_q")]
    pub sigma: Q,
    pub forms: Vec<ExponentForm>,
    pub constraints: Vec<Constraint>,
    pub fallback: Vec<ExponentForm>,
}

pub fn check_sigma(sigma: Q) -> Result<(), ExponentError> {
    if sigma < Q::zero() || sigma >= q(1, 9) {
        return Err(ExponentError::InvalidSigma(fmt_q(&sigma)));
    }
    Ok(())
}

/// Ledger for `|S(N)|/√N` built from the amplified bound
/// `S(N, A_j) ≪ √(NLp) + N^{1−7σ/4} p^{3σ/2} L^{3j/2+1−9jσ/4}`
/// after dividing by the amplifier length `L` and by `√N`.
pub fn proposition_ledger(j: u32, sigma: Q) -> Result<ExponentLedger, ExponentError> {
    if j != 1 && j != 2 {
        return Err(ExponentError::InvalidJ(j));
    }
    check_sigma(sigma)?;
    let half = q(1, 2);
    let jq = Q::from_integer(j as i128);
    // √(NLp)/(L√N) = p^{1/2} L^{−1/2}
    let diagonal = ExponentForm::new(Q::zero(), -half, half, "sqrt(NLp)/(L sqrt N)");
    // N^{1−7σ/4} p^{3σ/2} L^{3j/2+1−9jσ/4} / (L √N)
    let off = ExponentForm::new(
        half - q(7, 4) * sigma,
        q(3, 2) * jq - q(9, 4) * jq * sigma,
        q(3, 2) * sigma,
        "N^(1-7s/4) p^(3s/2) L^(3j/2+1-9js/4)/(L sqrt N)",
    );
    // Trivial bound S(N) ≪ N, i.e. √N after normalizing.
    let trivial = ExponentForm::new(half, Q::zero(), Q::zero(), "trivial N/sqrt N");
    let one = Q::one();
    let zero = Q::zero();
    let constraints = vec![
        Constraint::new(one, zero, zero, "x_N >= 0"),
        Constraint::new(-one, zero, one, "x_N <= 1"),
        Constraint::new(zero, one, zero, "x_L >= 0"),
        Constraint::new(q(1, 10), -one, zero, "x_L <= x_N/10"),
    ];
    Ok(ExponentLedger {
        j,
        sigma,
        forms: vec![diagonal, off],
        constraints,
        fallback: vec![trivial],
    })
}

/// `x_L* = slope·x_N + intercept` making two forms equal, and the common value
/// `value_slope·x_N + value_intercept` there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Balance {
    #[serde(serialize_with = "ser_q")]
    pub slope: Q,
    #[serde(serialize_with = "ser_q")]
    pub intercept: Q,
    #[serde(serialize_with = "ser_q")]
    pub value_slope: Q,
    #[serde(serialize_with = "ser_q")]
    pub value_intercept: Q,
}

impl Balance {
    pub fn x_l_at(&self, x_n: Q) -> Q {
        self.slope * x_n + self.intercept
    }

    pub fn value_at(&self, x_n: Q) -> Q {
        self.value_slope * x_n + self.value_intercept
    }
}

pub fn balance_forms(a: &ExponentForm, b: &ExponentForm) -> Result<Balance, ExponentError> {
    let dl = a.l - b.l;
    if dl.is_zero() {
        return Err(ExponentError::DegenerateBalance(fmt_q(&a.l)));
    }
    // (a.n − b.n) x_N + dl·x_L + (a.c − b.c) = 0
    let slope = -(a.n - b.n) / dl;
    let intercept = -(a.constant - b.constant) / dl;
    Ok(Balance {
        slope,
        intercept,
        value_slope: a.n + a.l * slope,
        value_intercept: a.constant + a.l * intercept,
    })
}

/// Solves the two ledger forms for the balancing `L`.
pub fn balance_l(ledger: &ExponentLedger) -> Result<Balance, ExponentError> {
    match ledger.forms.as_slice() {
        [a, b] => balance_forms(a, b),
        other => Err(ExponentError::WrongFormCount(other.len())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    #[serde(serialize_with = "ser_q")]
    pub x: Q,
    #[serde(serialize_with = "ser_q")]
    pub y: Q,
    #[serde(serialize_with = "ser_q")]
    pub value: Q,
}

/// Plane `a·x + b·y + c·t = d`.
#[derive(Clone, Copy)]
struct Plane([Q; 4]);

fn det3(m: [[Q; 3]; 3]) -> Q {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(p: [Plane; 3]) -> Option<[Q; 3]> {
    let m = [
        [p[0].0[0], p[0].0[1], p[0].0[2]],
        [p[1].0[0], p[1].0[1], p[1].0[2]],
        [p[2].0[0], p[2].0[1], p[2].0[2]],
    ];
    let d = det3(m);
    if d.is_zero() {
        return None;
    }
    let rhs = [p[0].0[3], p[1].0[3], p[2].0[3]];
    let mut out = [Q::zero(); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = rhs[r];
        }
        *slot = det3(mk) / d;
    }
    Some(out)
}

fn planes(forms: &[ExponentForm], constraints: &[Constraint]) -> Vec<Plane> {
    let mut ps = Vec::with_capacity(forms.len() + constraints.len());
    for f in forms {
        // t − n·x − l·y = c
        ps.push(Plane([-f.n, -f.l, Q::one(), f.constant]));
    }
    for c in constraints {
        ps.push(Plane([c.n, c.l, Q::zero(), -c.constant]));
    }
    ps
}

fn triples(n: usize) -> impl Iterator<Item = [usize; 3]> {
    (0..n).flat_map(move |a| (a + 1..n).flat_map(move |b| (b + 1..n).map(move |c| [a, b, c])))
}

/// Minimizes `max_i form_i(x, y)` over the polygon cut out by `constraints`.
///
/// The problem is the linear program `min t` subject to `t ≥ form_i` and the
/// constraints. Its optimum sits at a vertex, so every triple of bounding
/// planes is intersected and the best feasible vertex wins. The polygon must
/// be bounded. Ties go to the lexicographically smallest `(x, y)`.
pub fn minimize_max(forms: &[ExponentForm], constraints: &[Constraint]) -> Result<Optimum, ExponentError> {
    if forms.len() > MAX_FORMS {
        return Err(ExponentError::TooManyForms(forms.len()));
    }
    if forms.is_empty() {
        return Err(ExponentError::Infeasible);
    }
    let ps = planes(forms, constraints);
    let mut best: Option<Optimum> = None;
    for [a, b, c] in triples(ps.len()) {
        let Some([x, y, t]) = solve3([ps[a], ps[b], ps[c]]) else {
            continue;
        };
        if !constraints.iter().all(|k| k.holds(x, y)) {
            continue;
        }
        let value = forms.iter().map(|f| f.eval(x, y)).max().unwrap();
        if value != t {
            continue;
        }
        let better = match &best {
            None => true,
            Some(o) => (value, x, y) < (o.value, o.x, o.y),
        };
        if better {
            best = Some(Optimum { x, y, value });
        }
    }
    best.ok_or(ExponentError::Infeasible)
}

/// Result of the `L`-versus-`N` optimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalDelta {
    pub j: u32,
    #[serde(serialize_with = "ser_q")]
    pub sigma: Q,
    /// Saving in `L(1/2) ≪ p^{1/2−δ}`.
    #[serde(serialize_with = "ser_q")]
    pub delta: Q,
    /// `1/2 − δ`: the worst-case exponent of `|S(N)|/√N`.
    #[serde(serialize_with = "ser_q")]
    pub exponent: Q,
    /// `x_N` where the worst case is attained (smallest if several).
    #[serde(serialize_with = "ser_q")]
    pub worst_x_n: Q,
    /// Optimal `x_L` at the worst `x_N`, if the ledger (not the fallback) is active there.
    #[serde(serialize_with = "ser_opt_q")]
    pub worst_x_l: Option<Q>,
}

fn ser_opt_q<S: serde::Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_str(&fmt_q(v)),
        None => s.serialize_none(),
    }
}

fn fix_x(constraints: &[Constraint], x_n: Q) -> Vec<Constraint> {
    let mut cs = constraints.to_vec();
    cs.push(Constraint::new(Q::one(), Q::zero(), -x_n, "x_N fixed (lower)"));
    cs.push(Constraint::new(-Q::one(), Q::zero(), x_n, "x_N fixed (upper)"));
    cs
}

/// `min_{x_L} max(forms)` at a fixed `x_N`.
pub fn inner_optimum(ledger: &ExponentLedger, x_n: Q) -> Result<Optimum, ExponentError> {
    minimize_max(&ledger.forms, &fix_x(&ledger.constraints, x_n))
}

/// Range of `x_N` allowed by the constraints that do not involve `x_L`.
fn x_n_range(ledger: &ExponentLedger) -> Result<(Q, Q), ExponentError> {
    let mut lo: Option<Q> = None;
    let mut hi: Option<Q> = None;
    for c in ledger.constraints.iter().filter(|c| c.l.is_zero() && !c.n.is_zero()) {
        let root = -c.constant / c.n;
        if c.n.is_positive() {
            lo = Some(lo.map_or(root, |v: Q| v.max(root)));
        } else {
            hi = Some(hi.map_or(root, |v: Q| v.min(root)));
        }
    }
    match (lo, hi) {
        (Some(a), Some(b)) if a <= b => Ok((a, b)),
        _ => Err(ExponentError::Infeasible),
    }
}

/// Worst case over `x_N` of the best choice of `x_L`, capped by the fallback.
///
/// `inner(x_N) = min_{x_L} max(forms)` is piecewise linear with breakpoints
/// at the `x_N` coordinates of vertices of the plane arrangement, so it is
/// evaluated exactly there and interpolated in between. Where the fallback is
/// smaller it replaces the ledger value.
pub fn optimize_ledger(ledger: &ExponentLedger) -> Result<FinalDelta, ExponentError> {
    if let Some(f) = ledger.fallback.iter().find(|f| !f.l.is_zero()) {
        return Err(ExponentError::FallbackDependsOnL(f.label.clone()));
    }
    let (lo, hi) = x_n_range(ledger)?;
    let mut cands = vec![lo, hi];
    let ps = planes(&ledger.forms, &ledger.constraints);
    for [a, b, c] in triples(ps.len()) {
        if let Some([x, _, _]) = solve3([ps[a], ps[b], ps[c]]) {
            cands.push(x);
        }
    }
    for (i, f) in ledger.fallback.iter().enumerate() {
        for g in &ledger.fallback[i + 1..] {
            let dn = f.n - g.n;
            if !dn.is_zero() {
                cands.push(-(f.constant - g.constant) / dn);
            }
        }
    }
    cands.retain(|x| *x >= lo && *x <= hi);
    cands.sort();
    cands.dedup();

    let fallback = |x: Q| ledger.fallback.iter().map(|f| f.eval(x, Q::zero())).min();
    let inner: Vec<Q> = cands
        .iter()
        .map(|&x| inner_optimum(ledger, x).map(|o| o.value))
        .collect::<Result<_, _>>()?;

    // Points where the capped function can peak: candidates plus crossings
    // of the interpolated inner segment with each fallback line.
    let mut points: Vec<Q> = cands.clone();
    for k in 0..cands.len().saturating_sub(1) {
        let (x0, x1) = (cands[k], cands[k + 1]);
        let slope = (inner[k + 1] - inner[k]) / (x1 - x0);
        for f in &ledger.fallback {
            let ds = slope - f.n;
            if ds.is_zero() {
                continue;
            }
            // inner[k] + slope (x − x0) = f.n x + f.c
            let x = (f.constant - inner[k] + slope * x0) / ds;
            if x > x0 && x < x1 {
                points.push(x);
            }
        }
    }
    points.sort();
    points.dedup();

    let mut best: Option<(Q, Q, Option<Q>)> = None;
    for x in points {
        let opt = inner_optimum(ledger, x)?;
        let (value, x_l) = match fallback(x) {
            Some(fb) if fb < opt.value => (fb, None),
            _ => (opt.value, Some(opt.y)),
        };
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, x, x_l));
        }
    }
    let (exponent, worst_x_n, worst_x_l) = best.ok_or(ExponentError::Infeasible)?;
    Ok(FinalDelta {
        j: ledger.j,
        sigma: ledger.sigma,
        delta: q(1, 2) - exponent,
        exponent,
        worst_x_n,
        worst_x_l,
    })
}

/// The saving `δ` with `L(1/2) ≪ p^{1/2−δ+ε}` for amplifier power `j`.
pub fn final_delta(j: u32, sigma: Q) -> Result<FinalDelta, ExponentError> {
    optimize_ledger(&proposition_ledger(j, sigma)?)
}

/// Earlier savings for the same family of `L`-functions, for comparison.
pub fn literature_deltas() -> Vec<(&'static str, Q)> {
    vec![
        ("Duke-Friedlander-Iwaniec 2001", q(1, 96)),
        ("Duke-Friedlander-Iwaniec 2002", q(1, 23041)),
        ("Kowalski-Michel-VanderKam 2002", q(1, 80)),
        ("Michel 2004", q(1, 1057)),
        ("Harcos-Michel 2006", q(1, 2648)),
        ("Harcos (Maass)", q(1, 1413)),
        ("Blomer-Khan", q(1, 64)),
        ("Raju", q(25, 962)),
        ("Zacharias", q(25, 384)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_forms_at_one_twentieth() {
        let l = proposition_ledger(2, q(1, 20)).unwrap();
        assert_eq!(l.forms[1].n, q(33, 80));
        assert_eq!(l.forms[1].l, q(111, 40));
        assert_eq!(l.forms[1].constant, q(3, 40));
        let l1 = proposition_ledger(1, q(1, 20)).unwrap();
        assert_eq!(l1.forms[1].l, q(111, 80));
    }

    #[test]
    fn sigma_zero_degenerates() {
        let l = proposition_ledger(2, Q::zero()).unwrap();
        assert_eq!(l.forms[1].n, q(1, 2));
        assert_eq!(l.forms[1].l, Q::from_integer(3));
        assert_eq!(l.forms[1].constant, Q::zero());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(proposition_ledger(3, q(1, 20)), Err(ExponentError::InvalidJ(3))));
        assert!(matches!(proposition_ledger(2, q(1, 9)), Err(ExponentError::InvalidSigma(_))));
        assert!(matches!(proposition_ledger(2, q(-1, 20)), Err(ExponentError::InvalidSigma(_))));
    }

    #[test]
    fn balance_matches_closed_forms() {
        for s in [q(1, 20), q(1, 30), q(1, 11)] {
            let b = balance_l(&proposition_ledger(2, s).unwrap()).unwrap();
            let two = Q::from_integer(2);
            let one = Q::one();
            assert_eq!(b.slope, -(two - q(7, 1) * s) / (q(14, 1) - q(18, 1) * s));
            assert_eq!(b.intercept, (one - q(3, 1) * s) / (q(7, 1) - q(9, 1) * s));
            let b1 = balance_l(&proposition_ledger(1, s).unwrap()).unwrap();
            assert_eq!(b1.slope, -(two - q(7, 1) * s) / (q(8, 1) - q(9, 1) * s));
            assert_eq!(b1.intercept, (two - q(6, 1) * s) / (q(8, 1) - q(9, 1) * s));
        }
    }

    #[test]
    fn balance_at_n_equals_p() {
        let b = balance_l(&proposition_ledger(2, q(1, 20)).unwrap()).unwrap();
        assert_eq!(b.x_l_at(Q::one()), q(1, 262));
        assert_eq!(b.value_at(Q::one()), q(261, 524));
        let b1 = balance_l(&proposition_ledger(1, q(1, 20)).unwrap()).unwrap();
        assert_eq!(b1.x_l_at(Q::one()), q(1, 151));
    }

    #[test]
    fn degenerate_balance() {
        let a = ExponentForm::new(Q::one(), Q::one(), Q::zero(), "a");
        let b = ExponentForm::new(Q::zero(), Q::one(), Q::one(), "b");
        assert!(matches!(balance_forms(&a, &b), Err(ExponentError::DegenerateBalance(_))));
    }

    #[test]
    fn mirrored_forms_balance_at_midpoint() {
        // 1 + x_L and 1 + (2 − x_L) meet at x_L = 1
        let a = ExponentForm::new(Q::zero(), Q::one(), Q::one(), "a");
        let b = ExponentForm::new(Q::zero(), -Q::one(), q(3, 1), "b");
        let bal = balance_forms(&a, &b).unwrap();
        assert_eq!(bal.intercept, Q::one());
        assert_eq!(bal.slope, Q::zero());
    }

    fn unit_box() -> Vec<Constraint> {
        let (o, z) = (Q::one(), Q::zero());
        vec![
            Constraint::new(o, z, z, "x>=0"),
            Constraint::new(-o, z, o, "x<=1"),
            Constraint::new(z, o, z, "y>=0"),
            Constraint::new(z, -o, o, "y<=1"),
        ]
    }

    #[test]
    fn minimize_single_form_hits_a_corner() {
        let f = ExponentForm::new(q(2, 1), q(-1, 1), Q::zero(), "f");
        let o = minimize_max(&[f], &unit_box()).unwrap();
        assert_eq!((o.x, o.y, o.value), (Q::zero(), Q::one(), q(-1, 1)));
    }

    #[test]
    fn minimize_two_crossing_forms() {
        let f = ExponentForm::new(Q::one(), Q::zero(), Q::zero(), "x");
        let g = ExponentForm::new(-Q::one(), Q::zero(), q(1, 2), "1/2 - x");
        let o = minimize_max(&[f, g], &unit_box()).unwrap();
        assert_eq!(o.x, q(1, 4));
        assert_eq!(o.value, q(1, 4));
    }

    #[test]
    fn minimize_infeasible() {
        let (o, z) = (Q::one(), Q::zero());
        let cs = vec![Constraint::new(o, z, -q(2, 1), "x>=2"), Constraint::new(-o, z, o, "x<=1")];
        let f = ExponentForm::new(o, z, z, "x");
        assert_eq!(minimize_max(&[f], &cs), Err(ExponentError::Infeasible));
    }

    #[test]
    fn headline_savings() {
        let d = final_delta(2, q(1, 20)).unwrap();
        assert_eq!(d.delta, q(1, 524));
        assert_eq!(d.exponent, q(261, 524));
        assert_eq!(d.worst_x_n, Q::one());
        assert_eq!(d.worst_x_l, Some(q(1, 262)));
        let d1 = final_delta(1, q(1, 20)).unwrap();
        assert_eq!(d1.delta, q(1, 302));
        assert_eq!(d1.worst_x_l, Some(q(1, 151)));
    }

    #[test]
    fn sigma_zero_gives_no_saving() {
        let d = final_delta(2, Q::zero()).unwrap();
        assert_eq!(d.delta, Q::zero());
        assert!(d.delta < final_delta(2, q(1, 20)).unwrap().delta);
    }

    #[test]
    fn saving_grows_with_sigma() {
        for j in [1, 2] {
            let mut prev = Q::zero();
            for k in 1..=5 {
                let d = final_delta(j, q(k, 100)).unwrap().delta;
                assert!(d >= prev, "j={j} sigma={k}/100");
                prev = d;
            }
        }
    }

    #[test]
    fn fallback_wins_for_short_sums() {
        let l = proposition_ledger(2, q(1, 20)).unwrap();
        let x = q(1, 2);
        assert!(inner_optimum(&l, x).unwrap().value > l.fallback[0].eval(x, Q::zero()));
    }

    #[test]
    fn fraction_round_trip() {
        for s in ["1/524", "3", "-7/20"] {
            assert_eq!(fmt_q(&parse_q(s).unwrap()), s);
        }
        assert!(parse_q("1/0x").is_err());
    }
}
