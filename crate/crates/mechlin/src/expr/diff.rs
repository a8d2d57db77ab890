//! Structural partial differentiation.

use super::{Expr, Func};
use num::One;

/// ∂E/∂x^i (1-based index).  Total: every representable expression has a
/// representable derivative.
pub fn diff(e: &Expr, i: usize) -> Expr {
    assert!(i >= 1, "variable indices are 1-based");
    match e {
        Expr::Const(_) | Expr::Param(_) => Expr::zero(),
        Expr::Var(j) => {
            if *j == i {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Add(ts) => Expr::add(ts.iter().map(|t| diff(t, i)).collect()),
        Expr::Mul(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for (k, fk) in fs.iter().enumerate() {
                let dk = diff(fk, i);
                if dk.is_const_zero() {
                    continue;
                }
                let mut prod: Vec<Expr> = Vec::with_capacity(fs.len());
                for (j, fj) in fs.iter().enumerate() {
                    if j == k {
                        prod.push(dk.clone());
                    } else {
                        prod.push(fj.as_ref().clone());
                    }
                }
                terms.push(Expr::mul(prod));
            }
            Expr::add(terms)
        }
        Expr::Pow(b, r) => {
            let db = diff(b, i);
            if db.is_const_zero() {
                return Expr::zero();
            }
            let mut r1 = r.clone();
            r1 -= num::BigRational::one();
            Expr::mul(vec![
                Expr::Const(r.clone()),
                Expr::pow_rat(b.as_ref().clone(), r1),
                db,
            ])
        }
        Expr::Apply(f, a) => {
            let da = diff(a, i);
            if da.is_const_zero() {
                return Expr::zero();
            }
            let arg = a.as_ref().clone();
            let outer = match f {
                Func::Sin => Expr::cos(arg),
                Func::Cos => Expr::neg(Expr::sin(arg)),
                Func::Tan => Expr::powi(Expr::sec(arg), 2),
                Func::Sec => Expr::mul(vec![Expr::sec(arg.clone()), Expr::tan(arg)]),
                Func::Exp => Expr::exp(arg),
                Func::Ln => Expr::powi(arg, -1),
            };
            Expr::mul(vec![outer, da])
        }
    }
}
