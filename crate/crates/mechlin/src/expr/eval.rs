//! Numeric evaluation of expression trees at a point.

use super::{Expr, Func};
use num::ToPrimitive;
use std::collections::BTreeMap;

/// Evaluation point: configuration values `x`, optional velocities `v`
/// (addressed by variable indices `n+1..2n`), and parameter bindings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub v: Option<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
}

impl Point {
    pub fn new(x: Vec<f64>) -> Point {
        Point {
            x,
            v: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with_v(mut self, v: Vec<f64>) -> Point {
        self.v = Some(v);
        self
    }

    pub fn with_param(mut self, name: impl Into<String>, value: f64) -> Point {
        self.params.insert(name.into(), value);
        self
    }

    /// Value of variable index `i` (1-based; spills into `v` past `x`).
    pub fn var(&self, i: usize) -> Option<f64> {
        let n = self.x.len();
        if i >= 1 && i <= n {
            Some(self.x[i - 1])
        } else if let Some(v) = &self.v {
            v.get(i - n - 1).copied()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable x{0} is not bound at the evaluation point")]
    UnboundVar(usize),
    #[error("parameter '{0}' is not bound at the evaluation point")]
    UnboundParam(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain violation in {0}")]
    Domain(&'static str),
    #[error("non-finite result")]
    NonFinite,
}

pub fn eval(e: &Expr, p: &Point) -> Result<f64, EvalError> {
    let v = eval_inner(e, p)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl Expr {
    /// Numeric value at a point; method form of [`eval`].
    pub fn eval(&self, p: &Point) -> Result<f64, EvalError> {
        eval(self, p)
    }
}

fn eval_inner(e: &Expr, p: &Point) -> Result<f64, EvalError> {
    match e {
        Expr::Const(c) => Ok(c.to_f64().ok_or(EvalError::NonFinite)?),
        Expr::Var(i) => p.var(*i).ok_or(EvalError::UnboundVar(*i)),
        Expr::Param(name) => p
            .params
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::UnboundParam(name.clone())),
        Expr::Add(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_inner(t, p)?;
            }
            Ok(acc)
        }
        Expr::Mul(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= eval_inner(f, p)?;
            }
            Ok(acc)
        }
        Expr::Pow(b, r) => {
            let base = eval_inner(b, p)?;
            if r.is_integer() {
                let k = r.to_integer().to_i32().ok_or(EvalError::NonFinite)?;
                if base == 0.0 && k < 0 {
                    return Err(EvalError::DivisionByZero);
                }
                Ok(base.powi(k))
            } else {
                let exp = r.to_f64().ok_or(EvalError::NonFinite)?;
                if base < 0.0 {
                    return Err(EvalError::Domain("fractional power of a negative base"));
                }
                if base == 0.0 && exp < 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                Ok(base.powf(exp))
            }
        }
        Expr::Apply(f, a) => {
            let arg = eval_inner(a, p)?;
            let out = match f {
                Func::Sin => arg.sin(),
                Func::Cos => arg.cos(),
                Func::Tan => arg.tan(),
                Func::Sec => {
                    let c = arg.cos();
                    if c == 0.0 {
                        return Err(EvalError::Domain("sec at a cosine zero"));
                    }
                    1.0 / c
                }
                Func::Exp => arg.exp(),
                Func::Ln => {
                    if arg <= 0.0 {
                        return Err(EvalError::Domain("ln of a non-positive value"));
                    }
                    arg.ln()
                }
            };
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn evaluates_mixed_expression() {
        let vars = names(&["x1", "x2"]);
        let e = parse("k*sin(x1) + x2^2/m", &vars).unwrap();
        let p = Point::new(vec![0.5, 2.0])
            .with_param("k", 3.0)
            .with_param("m", 4.0);
        let got = eval(&e, &p).unwrap();
        let want = 3.0 * 0.5f64.sin() + 4.0 / 4.0;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn velocity_indices_spill_past_x() {
        // With n=2, Var(3) is v1.
        let e = Expr::mul(vec![Expr::Var(3), Expr::Var(1)]);
        let p = Point::new(vec![2.0, 0.0]).with_v(vec![5.0, 7.0]);
        assert_eq!(eval(&e, &p).unwrap(), 10.0);
        let q = Point::new(vec![2.0, 0.0]);
        assert_eq!(eval(&e, &q), Err(EvalError::UnboundVar(3)));
    }

    #[test]
    fn domain_errors_are_reported() {
        let vars = names(&["x1"]);
        let p = Point::new(vec![-1.0]);
        assert!(matches!(
            eval(&parse("ln(x1)", &vars).unwrap(), &p),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            eval(&parse("sqrt(x1)", &vars).unwrap(), &p),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            eval(&parse("1/(x1+1)", &vars).unwrap(), &p),
            Err(EvalError::DivisionByZero)
        ));
        assert!(matches!(
            eval(&parse("k", &vars).unwrap(), &p),
            Err(EvalError::UnboundParam(_))
        ));
    }
}
