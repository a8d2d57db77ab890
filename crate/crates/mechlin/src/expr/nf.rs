//! Normal-form engine behind `simplify` and the structural half of the zero
//! test.
//!
//! An expression is flattened into a sum of monomials: a map from a sorted
//! factor list `[(base, exponent), …]` to an exact rational coefficient.
//! Bases are canonical rebuilt expressions (atoms, or atomized sums under
//! non-expandable powers), so structural equality of normal forms decides
//! equality for a useful fragment of the trig-rational class:
//!
//! - rational arithmetic is exact;
//! - `tan`/`sec`/`sqrt` are rewritten through sin, cos and rational powers;
//! - sin/cos of sums and integer multiples are expanded by the addition
//!   formulas (bounded; oversized arguments stay atomic);
//! - `cos^k` for integer `k ≥ 2` is eliminated via `cos² = 1 − sin²`,
//!   giving each trig unit a canonical sin-power basis;
//! - `exp` of sums splits into products of integer powers of unit
//!   exponentials;
//! - rebuilding a normal form and normalizing again is a fixpoint, which
//!   makes `simplify` structurally idempotent.
//!
//! Soundness over exactness: rewrites that can change values on some real
//! domain (splitting products under fractional powers, combining `(E^a)^b`
//! for fractional `b`) are not performed; undecided cases fall through to
//! the numeric sampling stage of `is_zero`.

use super::{exp_as_i64, rat_i64, rat_pow_i64, Expr, Func, Rat};
use num::{BigInt, Integer, One, Signed, Zero};
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

/// One multiplicative factor: canonical base raised to a rational exponent.
pub(crate) type Factor = (Arc<Expr>, Rat);
/// Sorted-by-base factor list with nonzero exponents.
pub(crate) type Mono = Vec<Factor>;
/// Sum of monomials with nonzero rational coefficients.
pub(crate) type NF = BTreeMap<Mono, Rat>;

const POW_EXPAND_CAP: i64 = 8;
const TRIG_TERM_CAP: usize = 6;
const TRIG_MULTIPLE_CAP: u64 = 24;
const RATIONALIZE_EXPAND_CAP: i64 = 12;
const CACHE_CAP: usize = 65_536;

thread_local! {
    static NORM_CACHE: RefCell<HashMap<Expr, NF>> = RefCell::new(HashMap::new());
    static FULL_CACHE: RefCell<HashMap<Expr, NF>> = RefCell::new(HashMap::new());
}

pub(crate) fn nf_zero() -> NF {
    BTreeMap::new()
}

pub(crate) fn nf_const(c: Rat) -> NF {
    let mut nf = BTreeMap::new();
    if !c.is_zero() {
        nf.insert(Vec::new(), c);
    }
    nf
}

fn nf_atom(e: Arc<Expr>) -> NF {
    let mut nf = BTreeMap::new();
    nf.insert(vec![(e, Rat::one())], Rat::one());
    nf
}

pub(crate) fn nf_add(mut a: NF, b: NF) -> NF {
    for (m, c) in b {
        add_term(&mut a, m, c);
    }
    a
}

fn add_term(nf: &mut NF, m: Mono, c: Rat) {
    if c.is_zero() {
        return;
    }
    match nf.entry(m) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            *o.get_mut() += c;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

fn nf_scale(mut nf: NF, c: &Rat) -> NF {
    if c.is_zero() {
        return nf_zero();
    }
    for coeff in nf.values_mut() {
        *coeff *= c.clone();
    }
    nf
}

pub(crate) fn nf_mul(a: &NF, b: &NF) -> NF {
    let mut out = nf_zero();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let (m, extra) = merge_monos(ma, mb);
            add_term(&mut out, m, ca.clone() * cb.clone() * extra);
        }
    }
    out
}

/// Merge two sorted factor lists, summing exponents of equal bases and
/// folding constant bases with integer (or perfect-root) exponents into the
/// returned coefficient multiplier.
fn merge_monos(a: &Mono, b: &Mono) -> (Mono, Rat) {
    let mut merged: Vec<Factor> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = match (a.get(i), b.get(j)) {
            (Some(fa), Some(fb)) => fa.0 <= fb.0,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!(),
        };
        if take_a && j < b.len() && i < a.len() && a[i].0 == b[j].0 {
            let exp = a[i].1.clone() + b[j].1.clone();
            if !exp.is_zero() {
                merged.push((a[i].0.clone(), exp));
            }
            i += 1;
            j += 1;
        } else if take_a {
            merged.push(a[i].clone());
            i += 1;
        } else {
            merged.push(b[j].clone());
            j += 1;
        }
    }
    let mut coeff = Rat::one();
    let mut kept: Mono = Vec::with_capacity(merged.len());
    for (base, exp) in merged {
        if let Expr::Const(c) = base.as_ref() {
            if c.is_one() {
                continue;
            }
            if let Some(k) = exp_as_i64(&exp) {
                if !(c.is_zero() && k < 0) && k.unsigned_abs() <= 256 {
                    coeff *= rat_pow_i64(c, k);
                    continue;
                }
            } else if let Expr::Const(folded) = Expr::pow_rat(Expr::Const(c.clone()), exp.clone())
            {
                coeff *= folded;
                continue;
            }
        }
        kept.push((base, exp));
    }
    (kept, coeff)
}

/// Greatest common divisor of coefficient magnitudes (content of the
/// polynomial): gcd of numerators over lcm of denominators.
fn content(nf: &NF) -> Rat {
    let mut num = BigInt::zero();
    let mut den = BigInt::one();
    for c in nf.values() {
        num = num.gcd(&c.numer().abs());
        den = den.lcm(c.denom());
    }
    if num.is_zero() {
        Rat::one()
    } else {
        Rat::new(num, den)
    }
}

/// Factor `nf = c · B` with `B` canonical: content 1 and (when `pull_sign`)
/// positive leading coefficient.  `pull_sign` is only sound for integer
/// powers of the result.
fn pull_content_sign(nf: &NF, pull_sign: bool) -> (Rat, NF) {
    if nf.is_empty() {
        return (Rat::one(), nf_zero());
    }
    let mut c = content(nf);
    if pull_sign {
        let leading = nf.values().next().unwrap();
        if leading.is_negative() {
            c = -c;
        }
    }
    let inv = c.recip();
    let reduced = nf_scale(nf.clone(), &inv);
    (c, reduced)
}

pub(crate) fn nf_pow(base: &NF, r: &Rat) -> NF {
    if r.is_zero() {
        return nf_const(Rat::one());
    }
    if r.is_one() {
        return base.clone();
    }
    if base.is_empty() {
        if r.is_positive() {
            return nf_zero();
        }
        // 0^negative: keep an explicit ill-defined atom so evaluation
        // (and therefore the zero test) reports the domain problem.
        return nf_atom(Arc::new(Expr::Pow(Arc::new(Expr::zero()), r.clone())));
    }
    if base.len() == 1 {
        let (mono, coeff) = base.iter().next().map(|(m, c)| (m.clone(), c.clone())).unwrap();
        if let Some(k) = exp_as_i64(r) {
            // Integer power of a monomial: scale exponents, fold the
            // coefficient exactly.
            if k.unsigned_abs() <= 4096 {
                let mut out_mono: Mono = Vec::with_capacity(mono.len());
                let mut extra = Rat::one();
                for (b, e) in &mono {
                    let scaled = e.clone() * r.clone();
                    if scaled.is_zero() {
                        continue;
                    }
                    if let Expr::Const(cb) = b.as_ref() {
                        if let Some(ik) = exp_as_i64(&scaled) {
                            if !(cb.is_zero() && ik < 0) && ik.unsigned_abs() <= 256 {
                                extra *= rat_pow_i64(cb, ik);
                                continue;
                            }
                        }
                    }
                    out_mono.push((b.clone(), scaled));
                }
                let mut out = nf_zero();
                add_term(&mut out, out_mono, rat_pow_i64(&coeff, k) * extra);
                return out;
            }
        } else {
            // Fractional power of a monomial.  Only two sound moves:
            // pull a positive rational content through, and pass the
            // exponent to a lone unit-power factor.
            let mut out = nf_zero();
            let mut factors: Mono = Vec::new();
            let mut coeff_out = Rat::one();
            if coeff.is_positive() {
                if let Expr::Const(folded) =
                    Expr::pow_rat(Expr::Const(coeff.clone()), r.clone())
                {
                    coeff_out = folded;
                } else {
                    factors.push((Arc::new(Expr::Const(coeff.clone())), r.clone()));
                }
                if mono.len() == 1 && mono[0].1.is_one() {
                    factors.push((mono[0].0.clone(), r.clone()));
                } else if !mono.is_empty() {
                    let inner = rebuild_mono(&mono, &Rat::one());
                    factors.push((Arc::new(inner), r.clone()));
                }
            } else {
                let inner = rebuild_mono(&mono, &coeff);
                factors.push((Arc::new(inner), r.clone()));
            }
            factors.sort_by(|a, b| a.0.cmp(&b.0));
            add_term(&mut out, factors, coeff_out);
            return out;
        }
    }
    // Multi-term base (or oversized monomial power).
    if let Some(k) = exp_as_i64(r) {
        if k > 1 && k <= POW_EXPAND_CAP && base.len() > 1 {
            let mut acc = base.clone();
            for _ in 1..k {
                acc = nf_mul(&acc, base);
            }
            return acc;
        }
        // Atomize with common factors, content and sign pulled out first
        // (all sound for integer powers): shared denominators and common
        // factors distribute as `(F·B)^k = F^k·B^k`, so the atom itself is a
        // clean polynomial.
        let cleaned = reduce_quotients(pyth_reduce(base.clone()));
        if cleaned.is_empty() {
            return nf_pow(&nf_zero(), r);
        }
        let (common, core) = pull_common_factors(&cleaned);
        let mut factors: Mono = Vec::new();
        let mut coeff = Rat::one();
        for (b, e) in common {
            factors.push((b, e * r.clone()));
        }
        if core.len() == 1 {
            let (m, c) = core.iter().next().unwrap();
            for (b, e) in m {
                factors.push((b.clone(), e.clone() * r.clone()));
            }
            coeff *= rat_pow_i64(c, k);
        } else {
            let (c, reduced) = pull_content_sign(&core, true);
            let inner = Arc::new(rebuild(&reduced));
            factors.push((inner, r.clone()));
            coeff *= rat_pow_i64(&c, k);
        }
        // Fold the factor list into canonical form (sorts, merges duplicate
        // bases, folds constant bases with integer exponents).
        let mut mono: Mono = Vec::new();
        for f in factors {
            let (merged, extra) = merge_monos(&mono, &vec![f]);
            mono = merged;
            coeff *= extra;
        }
        let mut out = nf_zero();
        add_term(&mut out, mono, coeff);
        return out;
    }
    // Fractional power of a sum: pull positive content only.
    let (c, reduced) = pull_content_sign(base, false);
    let inner = Arc::new(rebuild(&reduced));
    let mut factors: Mono = vec![(inner, r.clone())];
    let mut coeff_out = Rat::one();
    if !c.is_one() {
        if let Expr::Const(folded) = Expr::pow_rat(Expr::Const(c.clone()), r.clone()) {
            coeff_out = folded;
        } else {
            factors.push((Arc::new(Expr::Const(c)), r.clone()));
        }
    }
    factors.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = nf_zero();
    add_term(&mut out, factors, coeff_out);
    out
}

// ---------------------------------------------------------------------------
// Normalization

/// Full normalization: the raw recursive pass followed by Pythagorean
/// reduction and quotient reduction, so the result is zero-as-a-map iff the
/// structural engine can see the cancellation at all.
pub fn normalize(e: &Expr) -> NF {
    if let Some(hit) = FULL_CACHE.with(|c| c.borrow().get(e).cloned()) {
        return hit;
    }
    let raw = NORM_CACHE.with(|cache| {
        if cache.borrow().len() > CACHE_CAP {
            cache.borrow_mut().clear();
        }
        norm(e, cache)
    });
    let out = reduce_quotients(pyth_reduce(raw));
    FULL_CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() > CACHE_CAP {
            c.clear();
        }
        c.insert(e.clone(), out.clone());
    });
    out
}

fn norm(e: &Expr, cache: &RefCell<HashMap<Expr, NF>>) -> NF {
    if matches!(e, Expr::Const(_) | Expr::Var(_) | Expr::Param(_)) {
        return norm_uncached(e, cache);
    }
    if let Some(hit) = cache.borrow().get(e) {
        return hit.clone();
    }
    let nf = norm_uncached(e, cache);
    cache.borrow_mut().insert(e.clone(), nf.clone());
    nf
}

fn norm_uncached(e: &Expr, cache: &RefCell<HashMap<Expr, NF>>) -> NF {
    match e {
        Expr::Const(c) => nf_const(c.clone()),
        Expr::Var(_) | Expr::Param(_) => nf_atom(Arc::new(e.clone())),
        Expr::Add(ts) => {
            let mut acc = nf_zero();
            for t in ts {
                acc = nf_add(acc, norm(t, cache));
            }
            acc
        }
        Expr::Mul(fs) => {
            let mut acc = nf_const(Rat::one());
            for f in fs {
                acc = nf_mul(&acc, &norm(f, cache));
            }
            acc
        }
        Expr::Pow(b, r) => nf_pow(&norm(b, cache), r),
        Expr::Apply(f, a) => {
            let na = norm(a, cache);
            match f {
                Func::Sin | Func::Cos => expand_trig(*f, &na),
                Func::Tan => {
                    let s = expand_trig(Func::Sin, &na);
                    let c = expand_trig(Func::Cos, &na);
                    nf_mul(&s, &nf_pow(&c, &rat_i64(-1)))
                }
                Func::Sec => nf_pow(&expand_trig(Func::Cos, &na), &rat_i64(-1)),
                Func::Exp => expand_exp(&na),
                Func::Ln => atom_apply(Func::Ln, &na),
            }
        }
    }
}

/// Rebuild the (canonicalized) argument and keep the application atomic.
fn atom_apply(f: Func, arg_nf: &NF) -> NF {
    let arg = rebuild(arg_nf);
    match Expr::apply(f, arg) {
        Expr::Const(c) => nf_const(c),
        other => nf_atom(Arc::new(other)),
    }
}

fn expand_trig(f: Func, arg_nf: &NF) -> NF {
    if arg_nf.is_empty() {
        return match f {
            Func::Sin => nf_zero(),
            _ => nf_const(Rat::one()),
        };
    }
    // Cost guard: stay atomic on oversized arguments.
    use num::ToPrimitive;
    let mut total: u64 = 0;
    for c in arg_nf.values() {
        match c.numer().abs().to_u64() {
            Some(p) => total = total.saturating_add(p),
            None => return atom_apply(f, arg_nf),
        }
    }
    if arg_nf.len() > TRIG_TERM_CAP || total > TRIG_MULTIPLE_CAP {
        return atom_apply(f, arg_nf);
    }
    let terms: Vec<(Mono, Rat)> = arg_nf.iter().map(|(m, c)| (m.clone(), c.clone())).collect();
    let (s, c) = sincos_of_terms(&terms);
    match f {
        Func::Sin => s,
        _ => c,
    }
}

/// Simultaneous (sin, cos) of a sum of monomials via the addition formulas
/// and the integer multiple-angle recursion over per-monomial units.
fn sincos_of_terms(terms: &[(Mono, Rat)]) -> (NF, NF) {
    use num::ToPrimitive;
    if terms.len() == 1 {
        let (mono, coeff) = &terms[0];
        let p = coeff.numer().to_i64().expect("guarded by expand_trig cap");
        let unit_coeff = Rat::new(BigInt::one(), coeff.denom().clone());
        let mut unit_nf = nf_zero();
        add_term(&mut unit_nf, mono.clone(), unit_coeff);
        let u = rebuild(&unit_nf);
        let s1 = nf_atom(Arc::new(Expr::Apply(Func::Sin, Arc::new(u.clone()))));
        let c1 = nf_atom(Arc::new(Expr::Apply(Func::Cos, Arc::new(u))));
        let (mut s, c) = angle_multiple(&s1, &c1, p.unsigned_abs());
        if p < 0 {
            s = nf_scale(s, &rat_i64(-1));
        }
        (s, c)
    } else {
        let (s1, c1) = sincos_of_terms(&terms[..1]);
        let (s2, c2) = sincos_of_terms(&terms[1..]);
        let sin = nf_add(nf_mul(&s1, &c2), nf_mul(&c1, &s2));
        let cos = nf_add(nf_mul(&c1, &c2), nf_scale(nf_mul(&s1, &s2), &rat_i64(-1)));
        (sin, cos)
    }
}

fn angle_multiple(s1: &NF, c1: &NF, k: u64) -> (NF, NF) {
    let mut s = s1.clone();
    let mut c = c1.clone();
    for _ in 1..k {
        let ns = nf_add(nf_mul(&s, c1), nf_mul(&c, s1));
        let nc = nf_add(nf_mul(&c, c1), nf_scale(nf_mul(&s, s1), &rat_i64(-1)));
        s = ns;
        c = nc;
    }
    (s, c)
}

/// exp(Σ cᵢ·mᵢ) = Π exp(unitᵢ)^pᵢ with unitᵢ = mᵢ/denom(cᵢ).
fn expand_exp(arg_nf: &NF) -> NF {
    use num::ToPrimitive;
    if arg_nf.is_empty() {
        return nf_const(Rat::one());
    }
    let mut out = nf_const(Rat::one());
    for (m, c) in arg_nf {
        let p = match c.numer().to_i64() {
            Some(p) => p,
            None => return atom_apply(Func::Exp, arg_nf),
        };
        let unit_coeff = Rat::new(BigInt::one(), c.denom().clone());
        let mut unit_nf = nf_zero();
        add_term(&mut unit_nf, m.clone(), unit_coeff);
        let u = rebuild(&unit_nf);
        let atom = Arc::new(Expr::Apply(Func::Exp, Arc::new(u)));
        let mut factor = nf_zero();
        add_term(&mut factor, vec![(atom, rat_i64(p))], Rat::one());
        out = nf_mul(&out, &factor);
    }
    out
}

// ---------------------------------------------------------------------------
// Pythagorean reduction: eliminate cos^k (integer k ≥ 2) via cos² = 1 − sin².

pub(crate) fn pyth_reduce(nf: NF) -> NF {
    if !nf
        .keys()
        .any(|m| m.iter().any(|(b, e)| is_cos(b) && is_int_ge2(e)))
    {
        return nf;
    }
    let mut out = nf_zero();
    for (m, c) in nf {
        pyth_mono(&mut out, m, c);
    }
    out
}

/// Expand one monomial's `cos^k` factors via `cos² = 1 − sin²` using the
/// binomial theorem, recursing over any further cos powers.
fn pyth_mono(out: &mut NF, m: Mono, c: Rat) {
    use num::ToPrimitive;
    let Some(idx) = m.iter().position(|(b, e)| is_cos(b) && is_int_ge2(e)) else {
        add_term(out, m, c);
        return;
    };
    let (cos_base, exp) = m[idx].clone();
    let q = (exp.to_integer() / BigInt::from(2)).to_i64();
    let Some(q) = q.filter(|q| *q <= 1024) else {
        // Absurd powers stay unexpanded; the numeric stage still covers them.
        add_term(out, m, c);
        return;
    };
    let unit = match cos_base.as_ref() {
        Expr::Apply(Func::Cos, u) => u.clone(),
        _ => unreachable!(),
    };
    let mut rest = m.clone();
    let leftover = rest[idx].1.clone() - rat_i64(2 * q);
    if leftover.is_zero() {
        rest.remove(idx);
    } else {
        rest[idx].1 = leftover;
    }
    // m·cos^{2q} = m' · (1 − sin²u)^q = m' · Σⱼ C(q,j)(−sin²u)^j
    let sin_atom = Arc::new(Expr::Apply(Func::Sin, unit));
    let mut binom = BigInt::one();
    for j in 0..=q {
        let sign = if j % 2 == 0 { 1 } else { -1 };
        let coeff = c.clone() * Rat::from_integer(binom.clone() * BigInt::from(sign));
        if j == 0 {
            pyth_mono(out, rest.clone(), coeff);
        } else {
            let sin_pow = vec![(sin_atom.clone(), rat_i64(2 * j))];
            let (merged, extra) = merge_monos(&rest, &sin_pow);
            pyth_mono(out, merged, coeff * extra);
        }
        binom = binom * BigInt::from(q - j) / BigInt::from(j + 1);
    }
}

fn is_cos(b: &Expr) -> bool {
    matches!(b, Expr::Apply(Func::Cos, _))
}

fn is_int_ge2(e: &Rat) -> bool {
    e.is_integer() && *e >= rat_i64(2)
}

// ---------------------------------------------------------------------------
// Quotient reduction: cancel sum denominators by exact polynomial division.

const DIV_BASE_TERM_CAP: usize = 64;
const DIV_POWER_CAP: i64 = 8;
const DIV_NUMER_CAP: usize = 100_000;

/// Cancel negative powers of atomized sum bases wherever the numerator is
/// exactly divisible by the base polynomial, turning `(c·x·Δ)·Δ⁻¹` back into
/// `c·x`.  Monomials are grouped by their power of the base and each group
/// divides independently (a partial-fraction split), so nothing is ever
/// multiplied out, failures cost one leading-term check, and irreducible
/// quotients pass through unchanged.  Like the rationalized zero test,
/// cancellation is value-preserving wherever the denominators are nonzero.
pub(crate) fn reduce_quotients(nf: NF) -> NF {
    let mut out = nf;
    // Cancelling one base can merge groups and expose another reduction;
    // one repeat pass catches those without risking long chains.
    for _ in 0..2 {
        let mut bases: Vec<Arc<Expr>> = Vec::new();
        for m in out.keys() {
            for (b, e) in m {
                if e.is_negative()
                    && matches!(b.as_ref(), Expr::Add(_))
                    && !bases.iter().any(|x| x == b)
                {
                    bases.push(b.clone());
                }
            }
        }
        if bases.is_empty() {
            return out;
        }
        let mut changed = false;
        for b in &bases {
            if let Some(reduced) = reduce_base(&out, b) {
                out = reduced;
                changed = true;
            }
        }
        // Cancellations that straddle two denominators (partial fractions
        // whose pieces only collapse over the common denominator) need the
        // bases cleared together.
        if bases.len() > 1 {
            if let Some(reduced) = reduce_common(&out, &bases) {
                out = reduced;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Put the whole form over the common denominator of every suitable sum
/// base, divide the single numerator by each base as often as it goes, and
/// keep the result only when it actually shrinks the form (otherwise the
/// partial-fraction shape was the better normal form).
fn reduce_common(nf: &NF, bases: &[Arc<Expr>]) -> Option<NF> {
    use num::ToPrimitive;
    let mut suitable: Vec<(Arc<Expr>, NF)> = Vec::new();
    for b in bases {
        let bnf = normalize(b.as_ref());
        if bnf.len() < 2 || bnf.len() > DIV_BASE_TERM_CAP {
            continue;
        }
        if bnf
            .keys()
            .any(|m| m.iter().any(|(_, e)| !e.is_integer() || e.is_negative()))
        {
            continue;
        }
        suitable.push((b.clone(), bnf));
    }
    if suitable.len() < 2 {
        return None;
    }
    // Worst negative power of each base across the form.
    let mut clear: Vec<i64> = vec![0; suitable.len()];
    for m in nf.keys() {
        for (b, e) in m {
            if !e.is_negative() {
                continue;
            }
            if let Some(i) = suitable.iter().position(|(sb, _)| sb == b) {
                let need = (-e.clone()).ceil().to_integer().to_i64()?;
                if need > DIV_POWER_CAP {
                    return None;
                }
                clear[i] = clear[i].max(need);
            }
        }
    }
    if clear.iter().all(|k| *k == 0) {
        return None;
    }
    // Expanded powers of each base up to its clearing power.
    let mut bpow: Vec<Vec<NF>> = Vec::with_capacity(suitable.len());
    for (i, (_, bnf)) in suitable.iter().enumerate() {
        let mut powers = vec![nf_const(Rat::one())];
        for j in 1..=clear[i] as usize {
            let next = pyth_reduce(nf_mul(&powers[j - 1], bnf));
            if next.len() > DIV_NUMER_CAP {
                return None;
            }
            powers.push(next);
        }
        bpow.push(powers);
    }
    // Single numerator over the common denominator.
    let mut numer = nf_zero();
    for (m, c) in nf {
        let mut mono: Mono = Vec::with_capacity(m.len());
        let mut coeff = c.clone();
        let mut expand: Vec<i64> = clear.clone();
        for (b, e) in m {
            let Some(i) = suitable.iter().position(|(sb, _)| sb == b) else {
                mono.push((b.clone(), e.clone()));
                continue;
            };
            if e.is_negative() {
                let whole = (-e.clone()).ceil().to_integer().to_i64()?;
                expand[i] = clear[i] - whole;
                let leftover = e.clone() + Rat::from_integer(BigInt::from(whole));
                if !leftover.is_zero() {
                    let (merged, extra) = merge_monos(&mono, &vec![(b.clone(), leftover)]);
                    mono = merged;
                    coeff *= extra;
                }
            } else {
                mono.push((b.clone(), e.clone()));
            }
        }
        mono.sort_by(|a, b| a.0.cmp(&b.0));
        let mut term = nf_zero();
        add_term(&mut term, mono, coeff);
        for (i, u) in expand.iter().enumerate() {
            if *u > 0 {
                term = nf_mul(&term, &bpow[i][*u as usize]);
            }
        }
        numer = nf_add(numer, term);
        if numer.len() > DIV_NUMER_CAP {
            return None;
        }
    }
    numer = pyth_reduce(numer);
    // Divide by each base as often as the numerator allows.
    let mut times: Vec<i64> = vec![0; suitable.len()];
    let mut total: i64 = 0;
    for (i, (_, bnf)) in suitable.iter().enumerate() {
        while times[i] < clear[i] + DIV_POWER_CAP {
            match nf_try_div(&numer, bnf) {
                Some(q) => {
                    numer = q;
                    times[i] += 1;
                    total += 1;
                    if numer.len() < 2 {
                        break;
                    }
                }
                None => break,
            }
        }
        if numer.len() < 2 {
            break;
        }
    }
    if total == 0 {
        return None;
    }
    // Reattach undivided denominator powers.
    let mut shift: Mono = Vec::new();
    for (i, (b, _)) in suitable.iter().enumerate() {
        let residue = times[i] - clear[i];
        if residue != 0 {
            shift.push((b.clone(), rat_i64(residue)));
        }
    }
    let out = if shift.is_empty() {
        numer
    } else {
        shift.sort_by(|a, b| a.0.cmp(&b.0));
        let mut shifted = nf_zero();
        for (m, c) in numer {
            let (merged, extra) = merge_monos(&m, &shift);
            add_term(&mut shifted, merged, c * extra);
        }
        shifted
    };
    // Only keep a genuinely smaller form.
    (out.len() <= nf.len()).then_some(out)
}

/// Try to cancel powers of one sum base.  Returns the reduced form, or
/// `None` when no group divides.
fn reduce_base(nf: &NF, base: &Arc<Expr>) -> Option<NF> {
    use num::ToPrimitive;
    let bnf = normalize(base.as_ref());
    if bnf.len() < 2 || bnf.len() > DIV_BASE_TERM_CAP {
        return None;
    }
    // The divisor must be a plain polynomial in its factor bases.
    if bnf
        .keys()
        .any(|m| m.iter().any(|(_, e)| !e.is_integer() || e.is_negative()))
    {
        return None;
    }
    // Group monomials by the whole part of the base's negative exponent;
    // fractional parts stay attached as atom factors.
    let mut groups: BTreeMap<i64, NF> = BTreeMap::new();
    let mut out = nf_zero();
    for (m, c) in nf {
        let mut stripped: Mono = Vec::with_capacity(m.len());
        let mut e_base = Rat::zero();
        for (b, e) in m {
            if b == base {
                e_base = e.clone();
            } else {
                stripped.push((b.clone(), e.clone()));
            }
        }
        if !e_base.is_negative() {
            add_term(&mut out, m.clone(), c.clone());
            continue;
        }
        let whole = match (-e_base.clone()).ceil().to_integer().to_i64() {
            Some(w) if w <= DIV_POWER_CAP => w,
            _ => {
                add_term(&mut out, m.clone(), c.clone());
                continue;
            }
        };
        let leftover = e_base + Rat::from_integer(BigInt::from(whole));
        let mut mono = stripped;
        let mut coeff = c.clone();
        if !leftover.is_zero() {
            let (merged, extra) = merge_monos(&mono, &vec![(base.clone(), leftover)]);
            mono = merged;
            coeff *= extra;
        }
        add_term(groups.entry(whole).or_default(), mono, coeff);
    }
    // Divide each group as often as its power allows and reattach the rest.
    let mut changed = false;
    for (j, group) in groups {
        let mut numer = group;
        let mut times: i64 = 0;
        while times < j {
            match nf_try_div(&numer, &bnf) {
                Some(q) => {
                    numer = q;
                    times += 1;
                    changed = true;
                    if numer.len() < 2 {
                        break;
                    }
                }
                None => break,
            }
        }
        if times < j {
            let shift = vec![(base.clone(), rat_i64(-(j - times)))];
            for (m, c) in numer {
                let (merged, extra) = merge_monos(&m, &shift);
                add_term(&mut out, merged, c * extra);
            }
        } else {
            out = nf_add(out, numer);
        }
    }
    changed.then_some(out)
}

/// Exact division `n / d` over the monomial algebra by repeated cancellation
/// of leading terms under a graded order (total exponent degree, then the
/// map's own monomial order).  Succeeds iff the remainder reaches zero, which
/// makes the result correct independent of the order; the order only decides
/// which exact quotients are found.  The leading key must strictly decrease
/// every step, so the loop terminates quickly on non-quotients instead of
/// wandering.
fn nf_try_div(n: &NF, d: &NF) -> Option<NF> {
    if n.is_empty() {
        return Some(nf_zero());
    }
    let mut div: Vec<(Mono, Rat)> = Vec::with_capacity(d.len());
    for (m, c) in d {
        div.push((m.clone(), c.clone()));
    }
    div.sort_by(|a, b| graded_key(&a.0).cmp(&graded_key(&b.0)));
    let (dm, dc) = div.pop()?;
    let mut rem: BTreeMap<(Rat, LexMono), Rat> = BTreeMap::new();
    for (m, c) in n {
        rem.insert(graded_key(m), c.clone());
    }
    let mut quot = nf_zero();
    let mut budget = 8 * n.len() + 256;
    let mut last_key: Option<(Rat, LexMono)> = None;
    while let Some((key, rc)) = rem.pop_last() {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        if last_key.as_ref().is_some_and(|lk| key >= *lk) {
            return None;
        }
        let qm = mono_div(&key.1 .0, &dm)?;
        let qc = rc / dc.clone();
        add_term(&mut quot, qm.clone(), qc.clone());
        last_key = Some(key);
        // rem -= qc·qm·(d − leading); the leading product is the popped term.
        let mut tail = nf_zero();
        for (m, c) in &div {
            let (merged, extra) = merge_monos(&qm, m);
            add_term(&mut tail, merged, qc.clone() * c.clone() * extra);
        }
        for (m, c) in pyth_reduce(tail) {
            let k = graded_key(&m);
            match rem.entry(k) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(-c);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    *o.get_mut() -= c;
                    if o.get().is_zero() {
                        o.remove();
                    }
                }
            }
        }
    }
    Some(quot)
}

/// Graded sort key: total exponent degree first, then exponent-vector lex.
fn graded_key(m: &Mono) -> (Rat, LexMono) {
    let deg = m.iter().fold(Rat::zero(), |acc, (_, e)| acc + e.clone());
    (deg, LexMono(m.clone()))
}

/// Monomial wrapper ordered by exponent-vector lex over the ascending base
/// sequence, with absent bases counting as exponent zero.  Unlike the raw
/// `Vec` order this is compatible with monomial multiplication, which is what
/// makes leading-term division find every exact quotient.
#[derive(Clone, PartialEq, Eq)]
struct LexMono(Mono);

impl Ord for LexMono {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            match (a.get(i), b.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some((_, ea)), None) => return ea.cmp(&Rat::zero()),
                (None, Some((_, eb))) => return Rat::zero().cmp(eb),
                (Some((ba, ea)), Some((bb, eb))) => match ba.cmp(bb) {
                    Ordering::Less => return ea.cmp(&Rat::zero()),
                    Ordering::Greater => return Rat::zero().cmp(eb),
                    Ordering::Equal => match ea.cmp(eb) {
                        Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                        o => return o,
                    },
                },
            }
        }
    }
}

impl PartialOrd for LexMono {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Divide monomial `a` by `b` (positive integer exponents): every factor of
/// `b` must appear in `a` with an exponent at least as large.
fn mono_div(a: &Mono, b: &Mono) -> Option<Mono> {
    let mut out: Mono = Vec::with_capacity(a.len());
    let mut i = 0;
    for (bb, be) in b {
        loop {
            if i >= a.len() {
                return None;
            }
            match a[i].0.cmp(bb) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Equal => {
                    let ne = a[i].1.clone() - be.clone();
                    if ne.is_negative() {
                        return None;
                    }
                    if !ne.is_zero() {
                        out.push((a[i].0.clone(), ne));
                    }
                    i += 1;
                    break;
                }
                std::cmp::Ordering::Greater => return None,
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    Some(out)
}

/// Split `nf = F·B` where `F` is the factor list common to every monomial.
/// Shared denominators count: a base that is negative in some monomial is
/// pulled at its overall minimum exponent, and monomials missing it gain the
/// compensating positive power inside `B`.
fn pull_common_factors(nf: &NF) -> (Mono, NF) {
    let Some(first) = nf.keys().next() else {
        return (Vec::new(), nf.clone());
    };
    let mut candidates: Vec<Arc<Expr>> = first.iter().map(|(b, _)| b.clone()).collect();
    for m in nf.keys() {
        for (b, e) in m {
            if e.is_negative() && !candidates.iter().any(|x| x == b) {
                candidates.push(b.clone());
            }
        }
    }
    let mut pulled: Mono = Vec::new();
    for b in candidates {
        let mut cmin: Option<Rat> = None;
        for m in nf.keys() {
            let e = m
                .iter()
                .find(|(x, _)| *x == b)
                .map(|(_, e)| e.clone())
                .unwrap_or_else(Rat::zero);
            cmin = Some(match cmin {
                None => e,
                Some(c) if e < c => e,
                Some(c) => c,
            });
        }
        match cmin {
            Some(c) if !c.is_zero() => pulled.push((b, c)),
            _ => {}
        }
    }
    if pulled.is_empty() {
        return (Vec::new(), nf.clone());
    }
    pulled.sort_by(|a, b| a.0.cmp(&b.0));
    let inverse: Mono = pulled.iter().map(|(b, e)| (b.clone(), -e.clone())).collect();
    let mut stripped = nf_zero();
    for (m, c) in nf {
        let (merged, extra) = merge_monos(m, &inverse);
        add_term(&mut stripped, merged, c.clone() * extra);
    }
    (pulled, stripped)
}

// ---------------------------------------------------------------------------
// Rebuilding

/// Canonical expression for a normal form (Pythagorean-reduced first so the
/// output never carries an integer cos power above 1).
pub fn rebuild(nf: &NF) -> Expr {
    let reduced = pyth_reduce(nf.clone());
    let mut terms: Vec<Expr> = Vec::with_capacity(reduced.len());
    for (m, c) in &reduced {
        terms.push(rebuild_mono(m, c));
    }
    Expr::add(terms)
}

fn rebuild_mono(m: &Mono, coeff: &Rat) -> Expr {
    let mut factors: Vec<Expr> = Vec::with_capacity(m.len() + 1);
    if !coeff.is_one() || m.is_empty() {
        factors.push(Expr::Const(coeff.clone()));
    }
    for (b, e) in m {
        factors.push(Expr::pow_rat(b.as_ref().clone(), e.clone()));
    }
    Expr::mul(factors)
}

// ---------------------------------------------------------------------------
// Rationalization (for the structural zero test)

/// Multiply through by every base's worst negative exponent and expand
/// modest integer powers of sum bases; the result is zero as a normal form
/// iff the original is zero wherever its denominators don't vanish.
pub(crate) fn rationalized_numerator(nf: &NF) -> NF {
    let mut denom_exp: BTreeMap<Arc<Expr>, Rat> = BTreeMap::new();
    for m in nf.keys() {
        for (b, e) in m {
            if e.is_negative() {
                let need = -e.clone();
                let slot = denom_exp.entry(b.clone()).or_insert_with(Rat::zero);
                if need > *slot {
                    *slot = need;
                }
            }
        }
    }
    if denom_exp.is_empty() {
        return nf.clone();
    }
    if denom_exp.keys().any(|b| b.as_ref().is_const_zero()) {
        // Ill-defined everywhere; don't "prove" anything by multiplying by 0.
        return nf.clone();
    }
    let mut out = nf_zero();
    for (m, c) in nf {
        // Shift exponents up by the common denominator.
        let shift: Mono = denom_exp
            .iter()
            .map(|(b, e)| (b.clone(), e.clone()))
            .collect();
        let (shifted, extra) = merge_monos(m, &shift);
        // Expand integer powers of sum bases so cancellation can happen.
        let mut kept: Mono = Vec::new();
        let mut expanded = nf_const(Rat::one());
        for (b, e) in shifted {
            let expandable = matches!(b.as_ref(), Expr::Add(_))
                && exp_as_i64(&e).is_some_and(|k| k >= 1 && k <= RATIONALIZE_EXPAND_CAP);
            if expandable {
                let base_nf = normalize(b.as_ref());
                expanded = nf_mul(&expanded, &nf_pow(&base_nf, &e));
            } else {
                kept.push((b, e));
            }
        }
        let mut term = nf_zero();
        add_term(&mut term, kept, c.clone() * extra);
        out = nf_add(out, nf_mul(&term, &expanded));
    }
    pyth_reduce(out)
}

// ---------------------------------------------------------------------------
// Public simplification entry point

/// Normal-form simplification: value-preserving, structurally idempotent,
/// folds constants, collects identical terms, and returns the zero constant
/// whenever the normal form (or its rationalized numerator) cancels.
pub fn simplify(e: &Expr) -> Expr {
    let nf = normalize(e);
    if nf.is_empty() {
        return Expr::zero();
    }
    if rationalized_numerator(&nf).is_empty() {
        return Expr::zero();
    }
    rebuild(&nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval::eval, parse, Point};

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn simp(text: &str, vars: &[&str]) -> Expr {
        simplify(&parse(text, &names(vars)).unwrap())
    }

    fn assert_zero(text: &str, vars: &[&str]) {
        let s = simp(text, vars);
        assert!(s.is_const_zero(), "{text} simplified to {s}, not 0");
    }

    #[test]
    fn constant_cancellations() {
        // Combined-output Lie-derivative coefficient collapse: exact
        // rational arithmetic must prove this zero.
        assert_zero("((md+J2)/J2)*(-1/md) + (md+J2)/(J2*md)", &[]);
        assert_eq!(simp("sin(x1)*0 + x2", &["x1", "x2"]), Expr::Var(2));
        assert_eq!(simp("2+3*4", &[]), Expr::int(14));
    }

    #[test]
    fn pythagorean_identities() {
        assert_zero("(1 - sin(x1)^2) - cos(x1)^2", &["x1"]);
        assert_zero("sin(x1)^2 + cos(x1)^2 - 1", &["x1"]);
        assert_zero("cos(x1)^4 - (1-sin(x1)^2)^2", &["x1"]);
        // Through negative powers (rationalized numerator).
        assert_zero("sec(x1)^2 - tan(x1)^2 - 1", &["x1"]);
    }

    #[test]
    fn trig_argument_expansion() {
        assert_zero(
            "sin(x1+x2) - (sin(x1)*cos(x2) + cos(x1)*sin(x2))",
            &["x1", "x2"],
        );
        assert_zero(
            "cos(x1-x2) - (cos(x1)*cos(x2) + sin(x1)*sin(x2))",
            &["x1", "x2"],
        );
        assert_zero("sin(2*x1) - 2*sin(x1)*cos(x1)", &["x1"]);
        assert_zero("cos(2*x1) - (1 - 2*sin(x1)^2)", &["x1"]);
        assert_zero("sin(3*x1) - (3*sin(x1) - 4*sin(x1)^3)", &["x1"]);
        // Units are not cross-related: sin(x1) and sin(x1/2) stay distinct
        // atoms (the half-angle identity is left to the sampling stage).
        let s = simp("sin(x1/2)*2*cos(x1/2) - sin(x1)", &["x1"]);
        assert!(!s.is_const_zero());
    }

    #[test]
    fn tan_sec_rewrites() {
        assert_zero("tan(x1) - sin(x1)/cos(x1)", &["x1"]);
        assert_zero("sec(x1) - 1/cos(x1)", &["x1"]);
        assert_zero("tan(x1)*cos(x1) - sin(x1)", &["x1"]);
    }

    #[test]
    fn exp_expansion() {
        assert_zero("exp(x1+x2) - exp(x1)*exp(x2)", &["x1", "x2"]);
        assert_zero("exp(2*x1) - exp(x1)^2", &["x1"]);
        assert_zero("exp(x1)*exp(-x1) - 1", &["x1"]);
        assert_zero("ln(1)", &["x1"]);
    }

    #[test]
    fn rationalization_cancels_shared_denominators() {
        assert_zero("x1/(x1+x2) + x2/(x1+x2) - 1", &["x1", "x2"]);
        assert_zero("1/(-x1-x2) + 1/(x1+x2)", &["x1", "x2"]);
        assert_zero("1/(2*x1+2*x2) - 1/2*1/(x1+x2)", &["x1", "x2"]);
        // a/b + c/d = (ad+cb)/(bd)
        assert_zero(
            "m1/m2 + m3/m4 - (m1*m4 + m3*m2)/(m2*m4)",
            &[],
        );
    }

    #[test]
    fn polynomial_expansion() {
        assert_zero("(x1+x2)^2 - x1^2 - 2*x1*x2 - x2^2", &["x1", "x2"]);
        assert_zero("(x1-x2)*(x1+x2) - x1^2 + x2^2", &["x1", "x2"]);
    }

    #[test]
    fn collects_identical_terms() {
        let s = simp("sin(x1) + sin(x1)", &["x1"]);
        assert_eq!(s, simp("2*sin(x1)", &["x1"]));
    }

    #[test]
    fn unsound_power_moves_are_not_made() {
        // (x^2)^(1/2) is |x|, not x: must NOT simplify to a bare variable.
        let s = simp("(x1^2)^(1/2) - x1", &["x1"]);
        assert!(!s.is_const_zero());
        // sqrt(x)*sqrt(y) stays split from sqrt(x*y).
        let s = simp("sqrt(x1*x2) - sqrt(x1)*sqrt(x2)", &["x1", "x2"]);
        assert!(!s.is_const_zero());
    }

    #[test]
    fn idempotent_and_value_preserving() {
        let vars = names(&["x1", "x2", "x3"]);
        let samples = [
            "sin(x1+x2)^3 * cos(x1)/(x3+2) + tan(x2)",
            "(x1+x2)^2/(x1*x2) - k*sec(x3)",
            "exp(x1/3) * ln(x2+5) - x3^(1/2) * 7/3",
            "cos(2*x1-x2)*sin(x1)^4 + 1/(1+x1^2)",
            "-(m0/md)*sin(x1) + (m0/J2)*cos(x1)*x2",
        ];
        let p = Point::new(vec![0.7, 1.3, 0.9])
            .with_param("k", 2.5)
            .with_param("m0", 3.0)
            .with_param("md", 4.0)
            .with_param("J2", 5.0);
        for text in samples {
            let e = parse(text, &vars).unwrap();
            let s1 = simplify(&e);
            let s2 = simplify(&s1);
            assert_eq!(s1, s2, "simplify not idempotent on {text}: {s1} vs {s2}");
            let v0 = eval(&e, &p).unwrap();
            let v1 = eval(&s1, &p).unwrap();
            assert!(
                (v0 - v1).abs() <= 1e-9 * (1.0 + v0.abs()),
                "value changed on {text}: {v0} vs {v1}"
            );
        }
    }

    #[test]
    fn rebuild_normalize_fixpoint() {
        let vars = names(&["x1", "x2"]);
        for text in [
            "sin(3*x1)*cos(x2/2)^5",
            "(x1+x2)^-3 * tan(x1)",
            "sec(x1)^4 - sin(2*x1+x2)",
        ] {
            let e = parse(text, &vars).unwrap();
            let nf1 = normalize(&e);
            let r1 = rebuild(&nf1);
            let nf2 = normalize(&r1);
            let r2 = rebuild(&nf2);
            assert_eq!(r1, r2, "rebuild/normalize not a fixpoint for {text}");
        }
    }
}
