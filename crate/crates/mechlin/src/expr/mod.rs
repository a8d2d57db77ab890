//! Symbolic expression kernel.
//!
//! Scalar expressions over configuration variables `x^i` (1-based indices;
//! indices above `n` address tangent-lifted velocities when a system puts
//! them there), named parameters, and exact rational constants.  The kernel
//! provides parsing, differentiation, simplification to a normal form,
//! numeric evaluation, a probabilistic-with-proof zero test, and a compiled
//! evaluator for tight simulation loops.
//!
//! Values are immutable after construction and may be shared freely across
//! threads (`Arc` children, no interior mutability).

pub mod compiled;
pub mod diff;
pub mod eval;
pub mod nf;
pub mod parse;
pub mod zero;

use num::{BigInt, BigRational, One, Signed, Zero};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use compiled::{CompiledProgram, CompiledVec};
pub use eval::{EvalError, Point};
pub use parse::{parse, ParseError};
pub use zero::{is_zero, is_zero_seeded, ZeroTestError, ZeroVerdict, DEFAULT_ZERO_SEED};

/// Exact rational scalar used throughout the kernel.
pub type Rat = BigRational;

/// Unary analytic functions representable in the tree.
///
/// `sqrt` from the input grammar is represented as `Pow(·, 1/2)`, and `tan`,
/// `sec` are kept as explicit nodes for readable printing (the normal form
/// rewrites them through sin/cos internally).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sec,
    Exp,
    Ln,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sec => "sec",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }
}

/// Symbolic expression tree.
///
/// `Add` and `Mul` are n-ary and kept flat; `Pow` exponents are exact
/// rationals (general `E^F` is intentionally not representable).  Ordering
/// and hashing are structural, which lets expressions serve as map keys.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const(Rat),
    /// 1-based variable index.
    Var(usize),
    Param(String),
    Add(Vec<Arc<Expr>>),
    Mul(Vec<Arc<Expr>>),
    Pow(Arc<Expr>, Rat),
    Apply(Func, Arc<Expr>),
}

pub(crate) fn rat_i64(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub(crate) fn rat_frac(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Exponent small enough to expand/fold eagerly.
pub(crate) fn exp_as_i64(r: &Rat) -> Option<i64> {
    use num::ToPrimitive;
    if r.is_integer() {
        r.to_integer().to_i64()
    } else {
        None
    }
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(rat_i64(n))
    }

    pub fn rat(num: i64, den: i64) -> Expr {
        Expr::Const(rat_frac(num, den))
    }

    pub fn var(i: usize) -> Expr {
        assert!(i >= 1, "variable indices are 1-based");
        Expr::Var(i)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn zero() -> Expr {
        Expr::Const(Rat::zero())
    }

    pub fn one() -> Expr {
        Expr::Const(Rat::one())
    }

    pub fn is_const_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_zero())
    }

    pub fn is_const_one(&self) -> bool {
        matches!(self, Expr::Const(c) if c.is_one())
    }

    /// n-ary sum with light local canonicalization: flattens nested sums,
    /// folds rational constants, drops zeros.
    pub fn add(terms: Vec<Expr>) -> Expr {
        let mut flat: Vec<Arc<Expr>> = Vec::with_capacity(terms.len());
        let mut konst = Rat::zero();
        let mut stack: Vec<Expr> = terms;
        stack.reverse();
        while let Some(t) = stack.pop() {
            match t {
                Expr::Add(inner) => {
                    for e in inner.into_iter().rev() {
                        stack.push(unwrap_arc(e));
                    }
                }
                Expr::Const(c) => konst += c,
                other => flat.push(Arc::new(other)),
            }
        }
        if !konst.is_zero() {
            flat.push(Arc::new(Expr::Const(konst)));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => unwrap_arc(flat.pop().unwrap()),
            _ => Expr::Add(flat),
        }
    }

    /// n-ary product with light local canonicalization: flattens nested
    /// products, folds rational constants (placed first), short-circuits on
    /// zero, drops ones.
    pub fn mul(factors: Vec<Expr>) -> Expr {
        let mut flat: Vec<Arc<Expr>> = Vec::with_capacity(factors.len());
        let mut konst = Rat::one();
        let mut stack: Vec<Expr> = factors;
        stack.reverse();
        while let Some(f) = stack.pop() {
            match f {
                Expr::Mul(inner) => {
                    for e in inner.into_iter().rev() {
                        stack.push(unwrap_arc(e));
                    }
                }
                Expr::Const(c) => {
                    if c.is_zero() {
                        return Expr::zero();
                    }
                    konst *= c;
                }
                other => flat.push(Arc::new(other)),
            }
        }
        if flat.is_empty() {
            return Expr::Const(konst);
        }
        if !konst.is_one() {
            flat.insert(0, Arc::new(Expr::Const(konst)));
        }
        if flat.len() == 1 {
            unwrap_arc(flat.pop().unwrap())
        } else {
            Expr::Mul(flat)
        }
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::mul(vec![Expr::int(-1), e])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(vec![a, Expr::neg(b)])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::mul(vec![a, Expr::pow_rat(b, rat_i64(-1))])
    }

    /// `base^exp` for a rational exponent, with local folding:
    /// `E^0 = 1`, `E^1 = E`, exact constant folding for integer exponents,
    /// perfect-root folding for small fractional exponents, and
    /// `(E^a)^b → E^(ab)` when sound (`b` integer, or `a = 1`).
    pub fn pow_rat(base: Expr, exp: Rat) -> Expr {
        if exp.is_zero() {
            return Expr::one();
        }
        if exp.is_one() {
            return base;
        }
        match base {
            Expr::Const(c) => {
                if let Some(k) = exp_as_i64(&exp) {
                    if !(c.is_zero() && k < 0) && k.unsigned_abs() <= 256 {
                        return Expr::Const(rat_pow_i64(&c, k));
                    }
                } else if let Some(folded) = rat_perfect_pow(&c, &exp) {
                    return Expr::Const(folded);
                }
                Expr::Pow(Arc::new(Expr::Const(c)), exp)
            }
            Expr::Pow(inner, inner_exp) => {
                // (E^a)^b = E^(ab) only when b is an integer or a = 1;
                // e.g. (x^2)^(1/2) is |x|, not x.
                if exp.is_integer() || inner_exp.is_one() {
                    Expr::pow_rat(unwrap_arc(inner), inner_exp * exp)
                } else {
                    Expr::Pow(Arc::new(Expr::Pow(inner, inner_exp)), exp)
                }
            }
            other => Expr::Pow(Arc::new(other), exp),
        }
    }

    pub fn powi(base: Expr, k: i64) -> Expr {
        Expr::pow_rat(base, rat_i64(k))
    }

    pub fn sqrt(e: Expr) -> Expr {
        Expr::pow_rat(e, rat_frac(1, 2))
    }

    /// Apply a unary function, folding the handful of exact special values.
    pub fn apply(f: Func, arg: Expr) -> Expr {
        if let Expr::Const(c) = &arg {
            if c.is_zero() {
                match f {
                    Func::Sin | Func::Tan => return Expr::zero(),
                    Func::Cos | Func::Sec | Func::Exp => return Expr::one(),
                    Func::Ln => {}
                }
            }
            if c.is_one() && f == Func::Ln {
                return Expr::zero();
            }
        }
        Expr::Apply(f, Arc::new(arg))
    }

    pub fn sin(e: Expr) -> Expr {
        Expr::apply(Func::Sin, e)
    }
    pub fn cos(e: Expr) -> Expr {
        Expr::apply(Func::Cos, e)
    }
    pub fn tan(e: Expr) -> Expr {
        Expr::apply(Func::Tan, e)
    }
    pub fn sec(e: Expr) -> Expr {
        Expr::apply(Func::Sec, e)
    }
    pub fn exp(e: Expr) -> Expr {
        Expr::apply(Func::Exp, e)
    }
    pub fn ln(e: Expr) -> Expr {
        Expr::apply(Func::Ln, e)
    }

    /// Largest variable index occurring in the expression (0 if none).
    pub fn max_var_index(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Param(_) => 0,
            Expr::Var(i) => *i,
            Expr::Add(ts) | Expr::Mul(ts) => {
                ts.iter().map(|t| t.max_var_index()).max().unwrap_or(0)
            }
            Expr::Pow(b, _) => b.max_var_index(),
            Expr::Apply(_, a) => a.max_var_index(),
        }
    }

    pub fn vars_used(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) | Expr::Param(_) => {}
            Expr::Var(i) => {
                out.insert(*i);
            }
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
            Expr::Pow(b, _) => b.collect_vars(out),
            Expr::Apply(_, a) => a.collect_vars(out),
        }
    }

    pub fn params_used(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Param(p) => {
                out.insert(p.clone());
            }
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().for_each(|t| t.collect_params(out)),
            Expr::Pow(b, _) => b.collect_params(out),
            Expr::Apply(_, a) => a.collect_params(out),
        }
    }

    /// Replace every `Var(i)` with `table[i-1]`; panics if an index exceeds
    /// the table.  Used for composing expressions with coordinate maps.
    pub fn subst_vars(&self, table: &[Expr]) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => self.clone(),
            Expr::Var(i) => table
                .get(*i - 1)
                .unwrap_or_else(|| panic!("substitution table too short for x{i}"))
                .clone(),
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.subst_vars(table)).collect()),
            Expr::Mul(ts) => Expr::mul(ts.iter().map(|t| t.subst_vars(table)).collect()),
            Expr::Pow(b, r) => Expr::pow_rat(b.subst_vars(table), r.clone()),
            Expr::Apply(f, a) => Expr::apply(*f, a.subst_vars(table)),
        }
    }

    /// Replace parameters by expressions where the map has an entry.
    pub fn subst_params(&self, map: &std::collections::BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Param(p) => map.get(p).cloned().unwrap_or_else(|| self.clone()),
            Expr::Add(ts) => Expr::add(ts.iter().map(|t| t.subst_params(map)).collect()),
            Expr::Mul(ts) => Expr::mul(ts.iter().map(|t| t.subst_params(map)).collect()),
            Expr::Pow(b, r) => Expr::pow_rat(b.subst_params(map), r.clone()),
            Expr::Apply(f, a) => Expr::apply(*f, a.subst_params(map)),
        }
    }

    /// Render with explicit variable names (`names[i-1]` for `Var(i)`);
    /// indices past the table fall back to `x{i}`.  Output re-parses under
    /// the same name table to an evaluation-equivalent expression.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        print_expr(self, names, Prec::Add, &mut s);
        s
    }
}

fn unwrap_arc(e: Arc<Expr>) -> Expr {
    Arc::try_unwrap(e).unwrap_or_else(|rc| (*rc).clone())
}

pub(crate) fn rat_pow_i64(c: &Rat, k: i64) -> Rat {
    if k == 0 {
        return Rat::one();
    }
    let mut acc = Rat::one();
    let base = if k > 0 { c.clone() } else { c.recip() };
    for _ in 0..k.unsigned_abs() {
        acc *= base.clone();
    }
    acc
}

/// Try to fold `c^(p/q)` exactly: succeeds when |c|'s numerator and
/// denominator are perfect q-th powers (and the sign works out).
fn rat_perfect_pow(c: &Rat, exp: &Rat) -> Option<Rat> {
    use num::ToPrimitive;
    if c.is_negative() || c.is_zero() {
        // 0^(p/q) with p>0 is 0, else undefined; negative bases stay symbolic.
        if c.is_zero() && exp.is_positive() {
            return Some(Rat::zero());
        }
        return None;
    }
    let q = exp.denom().to_u32()?;
    if q > 64 {
        return None;
    }
    let num_root = c.numer().nth_root(q);
    let den_root = c.denom().nth_root(q);
    if &num::pow::pow(num_root.clone(), q as usize) == c.numer()
        && &num::pow::pow(den_root.clone(), q as usize) == c.denom()
    {
        let root = Rat::new(num_root, den_root);
        let p = exp.numer().to_i64()?;
        if p.unsigned_abs() > 256 || (root.is_zero() && p < 0) {
            return None;
        }
        Some(rat_pow_i64(&root, p))
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Printing

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Add,
    Mul,
    Pow,
}

fn default_name(i: usize) -> String {
    format!("x{i}")
}

fn var_name(i: usize, names: &[String]) -> String {
    names.get(i - 1).cloned().unwrap_or_else(|| default_name(i))
}

fn rat_to_string(c: &Rat) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

/// Split a term into (negative?, absolute term) for pretty `a - b` printing.
fn term_sign_split(e: &Expr) -> (bool, Expr) {
    match e {
        Expr::Const(c) if c.is_negative() => (true, Expr::Const(-c.clone())),
        Expr::Mul(fs) => {
            if let Some(Expr::Const(c)) = fs.first().map(|a| a.as_ref()) {
                if c.is_negative() {
                    let mut rest: Vec<Expr> =
                        fs[1..].iter().map(|a| a.as_ref().clone()).collect();
                    let abs = -c.clone();
                    if !abs.is_one() {
                        rest.insert(0, Expr::Const(abs));
                    }
                    return (true, Expr::mul(rest));
                }
            }
            (false, e.clone())
        }
        _ => (false, e.clone()),
    }
}

fn print_expr(e: &Expr, names: &[String], ctx: Prec, out: &mut String) {
    match e {
        Expr::Const(c) => {
            let needs_paren = (c.is_negative() && ctx > Prec::Add)
                || (!c.is_integer() && ctx >= Prec::Pow);
            if needs_paren {
                out.push('(');
            }
            out.push_str(&rat_to_string(c));
            if needs_paren {
                out.push(')');
            }
        }
        Expr::Var(i) => out.push_str(&var_name(*i, names)),
        Expr::Param(p) => out.push_str(p),
        Expr::Apply(f, a) => {
            out.push_str(f.name());
            out.push('(');
            print_expr(a, names, Prec::Add, out);
            out.push(')');
        }
        Expr::Add(ts) => {
            let paren = ctx > Prec::Add;
            if paren {
                out.push('(');
            }
            for (k, t) in ts.iter().enumerate() {
                let (negative, abs) = term_sign_split(t);
                if k == 0 {
                    if negative {
                        out.push('-');
                    }
                } else if negative {
                    out.push_str(" - ");
                } else {
                    out.push_str(" + ");
                }
                print_expr(&abs, names, Prec::Mul, out);
            }
            if paren {
                out.push(')');
            }
        }
        Expr::Mul(fs) => {
            let paren = ctx > Prec::Mul;
            if paren {
                out.push('(');
            }
            // Partition into numerator and denominator factors.
            let mut nums: Vec<Expr> = Vec::new();
            let mut dens: Vec<Expr> = Vec::new();
            for f in fs {
                match f.as_ref() {
                    Expr::Pow(b, r) if r.is_negative() => {
                        dens.push(Expr::pow_rat(b.as_ref().clone(), -r.clone()))
                    }
                    other => nums.push(other.clone()),
                }
            }
            if nums.is_empty() {
                nums.push(Expr::one());
            }
            for (k, f) in nums.iter().enumerate() {
                if k > 0 {
                    out.push('*');
                }
                print_expr(f, names, Prec::Mul, out);
            }
            for d in &dens {
                out.push('/');
                // Denominator factors bind as `Pow` operands: parenthesize
                // anything that isn't atomic enough.
                print_expr(d, names, Prec::Pow, out);
            }
            if paren {
                out.push(')');
            }
        }
        Expr::Pow(b, r) => {
            let paren = ctx > Prec::Pow;
            if paren {
                out.push('(');
            }
            let base_atomic = matches!(
                b.as_ref(),
                Expr::Var(_) | Expr::Param(_) | Expr::Apply(_, _)
            ) || matches!(b.as_ref(), Expr::Const(c) if !c.is_negative() && c.is_integer());
            if base_atomic {
                print_expr(b, names, Prec::Pow, out);
            } else {
                out.push('(');
                print_expr(b, names, Prec::Add, out);
                out.push(')');
            }
            out.push('^');
            out.push_str(&rat_to_string(r));
            if paren {
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text(&[]))
    }
}

// ---------------------------------------------------------------------------
// Operator sugar (by value; trees are cheap to clone via Arc sharing).

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_fold_locally() {
        let x = Expr::var(1);
        assert!(Expr::add(vec![Expr::zero(), x.clone()]).eq(&x));
        assert!(Expr::mul(vec![Expr::one(), x.clone()]).eq(&x));
        assert!(Expr::mul(vec![Expr::zero(), x.clone()]).is_const_zero());
        assert_eq!(Expr::powi(x.clone(), 0), Expr::one());
        assert_eq!(Expr::powi(Expr::int(3), 2), Expr::int(9));
        assert_eq!(Expr::pow_rat(Expr::int(4), rat_frac(1, 2)), Expr::int(2));
        assert_eq!(
            Expr::pow_rat(Expr::rat(8, 27), rat_frac(-1, 3)),
            Expr::rat(3, 2)
        );
    }

    #[test]
    fn nested_pow_combines_only_when_sound() {
        let x = Expr::var(1);
        // (x^2)^3 = x^6 (outer integer exponent).
        assert_eq!(
            Expr::powi(Expr::powi(x.clone(), 2), 3),
            Expr::powi(x.clone(), 6)
        );
        // (x^2)^(1/2) must stay nested: it is |x|, not x.
        let half = rat_frac(1, 2);
        let e = Expr::pow_rat(Expr::powi(x.clone(), 2), half.clone());
        match e {
            Expr::Pow(base, r) => {
                assert_eq!(r, half);
                assert_eq!(base.as_ref(), &Expr::powi(x, 2));
            }
            other => panic!("expected nested pow, got {other}"),
        }
    }

    #[test]
    fn printing_is_reasonable() {
        let e = Expr::sub(
            Expr::mul(vec![Expr::int(-1), Expr::var(1)]),
            Expr::div(Expr::param("k"), Expr::param("m")),
        );
        assert_eq!(e.to_text(&["q".into()]), "-q - k/m");
        let pow = Expr::pow_rat(Expr::add(vec![Expr::var(1), Expr::int(1)]), rat_frac(3, 2));
        assert_eq!(pow.to_text(&[]), "(x1 + 1)^3/2");
    }
}
