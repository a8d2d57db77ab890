//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ['-'] atom ['^' exponent]
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tan | sec | exp | ln | sqrt
//! ```
//!
//! Exponents are integers or rationals (`x^2`, `x^-1`, `x^3/2`, `x^(3/2)`);
//! the slash after `^` binds to the exponent, not to term-level division.
//! Decimal literals become exact rationals (`0.25` is 1/4).  Identifiers
//! matching a declared variable name bind to that variable; every other
//! identifier is a parameter.  Whitespace is insignificant.

use super::{rat_frac, Expr, Func, Rat};
use num::{BigInt, One, Zero};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

fn err<T>(pos: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        pos,
        message: message.into(),
    })
}

pub fn parse(text: &str, var_names: &[String]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        vars: var_names,
    };
    p.skip_ws();
    let e = p.parse_expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return err(p.pos, "unexpected trailing input");
    }
    Ok(e)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), ParseError> {
        if self.eat(b) {
            Ok(())
        } else {
            err(self.pos, format!("expected '{}'", b as char))
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.parse_term()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    self.skip_ws();
                    terms.push(self.parse_term()?);
                }
                Some(b'-') => {
                    self.bump();
                    self.skip_ws();
                    terms.push(Expr::neg(self.parse_term()?));
                }
                _ => break,
            }
        }
        Ok(Expr::add(terms))
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.parse_factor()?];
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.bump();
                    self.skip_ws();
                    factors.push(self.parse_factor()?);
                }
                Some(b'/') => {
                    self.bump();
                    self.skip_ws();
                    let f = self.parse_factor()?;
                    factors.push(Expr::pow_rat(f, rat_frac(-1, 1)));
                }
                _ => break,
            }
        }
        Ok(Expr::mul(factors))
    }

    fn parse_factor(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let negate = self.eat(b'-');
        if negate {
            self.skip_ws();
        }
        let atom = self.parse_atom()?;
        self.skip_ws();
        let powed = if self.eat(b'^') {
            self.skip_ws();
            let exp = self.parse_exponent()?;
            Expr::pow_rat(atom, exp)
        } else {
            atom
        };
        Ok(if negate { Expr::neg(powed) } else { powed })
    }

    /// `['-'] int ['/' int]`, optionally wrapped in parentheses.
    fn parse_exponent(&mut self) -> Result<Rat, ParseError> {
        if self.eat(b'(') {
            self.skip_ws();
            let r = self.parse_exponent_body()?;
            self.skip_ws();
            self.expect(b')')?;
            Ok(r)
        } else {
            self.parse_exponent_body()
        }
    }

    fn parse_exponent_body(&mut self) -> Result<Rat, ParseError> {
        let negate = self.eat(b'-');
        if negate {
            self.skip_ws();
        }
        let num = self.parse_integer("exponent")?;
        // `x^2/m` is (x^2)/m: the slash joins the exponent only when an
        // integer denominator follows.
        let den = if self.peek() == Some(b'/')
            && matches!(self.bytes.get(self.pos + 1), Some(b'0'..=b'9'))
        {
            self.bump();
            let d = self.parse_integer("exponent denominator")?;
            if d.is_zero() {
                return err(self.pos, "zero exponent denominator");
            }
            d
        } else {
            BigInt::one()
        };
        let mut r = Rat::new(num, den);
        if negate {
            r = -r;
        }
        Ok(r)
    }

    fn parse_integer(&mut self, what: &str) -> Result<BigInt, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == start {
            return err(start, format!("expected {what}"));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        Ok(BigInt::from_str(s).unwrap())
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.bump();
                self.skip_ws();
                let e = self.parse_expr()?;
                self.skip_ws();
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'0'..=b'9') => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.parse_ident(),
            Some(c) => err(self.pos, format!("unexpected character '{}'", c as char)),
            None => err(self.pos, "unexpected end of input"),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, ParseError> {
        let int_part = self.parse_integer("number")?;
        if self.peek() == Some(b'.') {
            self.bump();
            let frac_start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return err(self.pos, "expected digits after decimal point");
            }
            let frac_str = std::str::from_utf8(&self.bytes[frac_start..self.pos]).unwrap();
            let frac = BigInt::from_str(frac_str).unwrap();
            let scale = num::pow::pow(BigInt::from(10u32), self.pos - frac_start);
            Ok(Expr::Const(
                Rat::from_integer(int_part) + Rat::new(frac, scale),
            ))
        } else {
            Ok(Expr::Const(Rat::from_integer(int_part)))
        }
    }

    fn parse_ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = match name {
                "sin" => Some(Func::Sin),
                "cos" => Some(Func::Cos),
                "tan" => Some(Func::Tan),
                "sec" => Some(Func::Sec),
                "exp" => Some(Func::Exp),
                "ln" => Some(Func::Ln),
                "sqrt" => None, // represented as a 1/2 power
                _ => {
                    return err(start, format!("unknown function '{name}'"));
                }
            };
            self.expect(b'(')?;
            self.skip_ws();
            let arg = self.parse_expr()?;
            self.skip_ws();
            self.expect(b')')?;
            return Ok(match func {
                Some(f) => Expr::apply(f, arg),
                None => Expr::sqrt(arg),
            });
        }
        if let Some(idx) = self.vars.iter().position(|v| v == name) {
            Ok(Expr::Var(idx + 1))
        } else {
            Ok(Expr::Param(name.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn binds_variables_and_parameters() {
        let vars = names(&["x1", "x2", "x3"]);
        assert_eq!(parse("x3", &vars).unwrap(), Expr::Var(3));
        assert_eq!(parse("k", &vars).unwrap(), Expr::Param("k".into()));
    }

    #[test]
    fn builds_expected_tree_shapes() {
        let vars = names(&["x1"]);
        let e = parse("sin(x1)*k/m", &vars).unwrap();
        let expected = Expr::div(
            Expr::mul(vec![Expr::sin(Expr::Var(1)), Expr::param("k")]),
            Expr::param("m"),
        );
        assert_eq!(e, expected);

        let e2 = parse("-(m0/md)*sin(x1)", &vars).unwrap();
        let expected2 = Expr::neg(Expr::mul(vec![
            Expr::div(Expr::param("m0"), Expr::param("md")),
            Expr::sin(Expr::Var(1)),
        ]));
        assert_eq!(e2, expected2);
    }

    #[test]
    fn exponent_slash_binds_to_exponent() {
        let vars = names(&["x1"]);
        let e = parse("x1^3/2", &vars).unwrap();
        assert_eq!(e, Expr::pow_rat(Expr::Var(1), rat_frac(3, 2)));
        let e2 = parse("x1^(3/2)", &vars).unwrap();
        assert_eq!(e, e2);
        // But an explicit parenthesized power divides normally.
        let e3 = parse("(x1^3)/2", &vars).unwrap();
        assert_eq!(
            e3,
            Expr::mul(vec![Expr::rat(1, 2), Expr::powi(Expr::Var(1), 3)])
        );
    }

    #[test]
    fn unary_minus_binds_below_power() {
        let vars = names(&["x1"]);
        // -x^2 is -(x^2) per the factor rule.
        let e = parse("-x1^2", &vars).unwrap();
        assert_eq!(e, Expr::neg(Expr::powi(Expr::Var(1), 2)));
        // 3^2 folds; -3^2 folds to -9.
        assert_eq!(parse("-3^2", &vars).unwrap(), Expr::int(-9));
    }

    #[test]
    fn decimals_are_exact_rationals() {
        let vars = names(&[]);
        assert_eq!(parse("0.25", &vars).unwrap(), Expr::rat(1, 4));
        assert_eq!(parse("9.81", &vars).unwrap(), Expr::rat(981, 100));
    }

    #[test]
    fn sqrt_becomes_half_power() {
        let vars = names(&["x1"]);
        assert_eq!(
            parse("sqrt(x1)", &vars).unwrap(),
            Expr::pow_rat(Expr::Var(1), rat_frac(1, 2))
        );
    }

    #[test]
    fn errors_carry_positions() {
        let vars = names(&["x1"]);
        let e = parse("x1 + ", &vars).unwrap_err();
        assert_eq!(e.pos, 5);
        let e = parse("foo(x1)", &vars).unwrap_err();
        assert_eq!(e.pos, 0);
        assert!(e.message.contains("unknown function"));
        let e = parse("sin(x1", &vars).unwrap_err();
        assert!(e.message.contains("expected ')'"));
        let e = parse("x1 x2", &vars).unwrap_err();
        assert!(e.message.contains("trailing"));
    }

    #[test]
    fn whitespace_is_insignificant() {
        let vars = names(&["x1", "x2"]);
        let a = parse("x1*x2 + sin( x1 )", &vars).unwrap();
        let b = parse("x1 * x2+sin(x1)", &vars).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nested_arc_sharing_is_cheap() {
        let vars = names(&["x1"]);
        let e = parse("sin(x1) + sin(x1)", &vars).unwrap();
        // Just a smoke test that parsing yields an Add of two Apply nodes.
        match e {
            Expr::Add(ts) => {
                assert_eq!(ts.len(), 2);
                assert!(matches!(ts[0].as_ref(), Expr::Apply(Func::Sin, _)));
                let _: &Arc<Expr> = &ts[0];
            }
            other => panic!("expected sum, got {other}"),
        }
    }
}
